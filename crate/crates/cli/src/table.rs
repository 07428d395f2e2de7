//! Rectangular output tables and the files they end up in.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::ValueEnum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Tsv,
    /// Space-aligned columns for reading in a terminal.
    Pretty,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Tsv => "tsv",
            Format::Pretty => "txt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    /// Two-column `key,value` table.
    pub fn key_value(pairs: Vec<(&str, String)>) -> Self {
        let mut t = Table::new(["key", "value"]);
        for (k, v) in pairs {
            t.push(vec![k.to_string(), v]);
        }
        t
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Csv => self.delimited(b','),
            Format::Tsv => self.delimited(b'\t'),
            Format::Pretty => Ok(self.pretty()),
        }
    }

    fn delimited(&self, delimiter: u8) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().context("flushing table")?;
        Ok(String::from_utf8(bytes)?)
    }

    fn pretty(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(String::len).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let line = |cells: &[String]| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c:>w$}"))
                .collect();
            padded.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(&self.header);
        for row in &self.rows {
            out.push_str(&line(row));
        }
        out
    }
}

/// Shortest representation that reads back to the same `f64`; tiny and
/// huge magnitudes use exponent notation.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

/// Files produced by one command, held in memory until everything has been
/// computed so a failure never leaves half a result set behind.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, String)>,
}

impl Artifacts {
    pub fn table(&mut self, stem: &str, table: &Table, format: Format, stamp: bool) -> Result<()> {
        let mut body = String::new();
        if stamp {
            body.push_str(&timestamp_line());
        }
        body.push_str(&table.render(format)?);
        self.files.push((format!("{stem}.{}", format.extension()), body));
        Ok(())
    }

    pub fn raw(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), body));
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        self.files
            .iter()
            .map(|(name, body)| {
                let path = dir.join(name);
                fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
                Ok(path)
            })
            .collect()
    }
}

fn timestamp_line() -> String {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("# generated at unix time {secs}\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new(["id", "label"]);
        t.push(vec!["0".into(), "a,b".into()]);
        t.push(vec!["12".into(), "c".into()]);
        t
    }

    #[test]
    fn csv_quotes_separators() {
        assert_eq!(
            sample().render(Format::Csv).unwrap(),
            "id,label\n0,\"a,b\"\n12,c\n"
        );
    }

    #[test]
    fn tsv_and_pretty() {
        assert_eq!(
            sample().render(Format::Tsv).unwrap(),
            "id\tlabel\n0\ta,b\n12\tc\n"
        );
        assert_eq!(
            sample().render(Format::Pretty).unwrap(),
            "id  label\n 0    a,b\n12      c\n"
        );
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1e-12, -3.5e-7, 29.000000000000004, 1000.0, 2e20] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(8.5e-9), "8.5e-9");
        assert_eq!(num(0.0), "0");
    }
}
