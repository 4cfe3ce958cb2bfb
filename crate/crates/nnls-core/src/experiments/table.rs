//! Typed rectangular result tables with CSV and aligned-text emission.
//!
//! The CSV layout is a `#`-prefixed metadata block, a header row, then
//! data rows. Floats are written with 17 significant digits so a parsed
//! table reproduces the original values exactly; the `types` metadata
//! line lets the parser restore cell types.

use std::fs;
use std::path::Path;

use crate::error::{NnlsError, Result};
use crate::textdoc::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColType {
    Int,
    Float,
    Text,
}

impl ColType {
    fn as_str(self) -> &'static str {
        match self {
            ColType::Int => "int",
            ColType::Float => "float",
            ColType::Text => "text",
        }
    }

    fn parse(s: &str) -> Option<ColType> {
        match s {
            "int" => Some(ColType::Int),
            "float" => Some(ColType::Float),
            "text" => Some(ColType::Text),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Cell {
        let s = s.into();
        assert!(
            !s.contains(',') && !s.contains('\n') && !s.contains('"'),
            "text cells must not contain commas, quotes, or newlines: {s:?}"
        );
        Cell::Text(s)
    }

    fn col_type(&self) -> ColType {
        match self {
            Cell::Int(_) => ColType::Int,
            Cell::Float(_) => ColType::Float,
            Cell::Text(_) => ColType::Text,
        }
    }

    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => fmt_f64(*v),
            Cell::Text(v) => v.clone(),
        }
    }

    fn humane(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => {
                if v.is_nan() {
                    "NaN".into()
                } else {
                    format!("{v:.6e}")
                }
            }
            Cell::Text(v) => v.clone(),
        }
    }

    /// Bitwise equality: NaN compares equal to NaN so that deterministic
    /// reruns of a table compare clean.
    fn same(&self, other: &Cell) -> bool {
        match (self, other) {
            (Cell::Float(a), Cell::Float(b)) => a.to_bits() == b.to_bits(),
            (a, b) => a == b,
        }
    }
}

const MAGIC: &str = "nnls-table v1";

#[derive(Debug, Clone)]
pub struct ResultTable {
    columns: Vec<String>,
    types: Vec<ColType>,
    rows: Vec<Vec<Cell>>,
    metadata: Vec<(String, String)>,
}

impl ResultTable {
    pub fn new(columns: &[(&str, ColType)]) -> ResultTable {
        assert!(!columns.is_empty());
        ResultTable {
            columns: columns.iter().map(|(n, _)| n.to_string()).collect(),
            types: columns.iter().map(|(_, t)| *t).collect(),
            rows: Vec::new(),
            metadata: Vec::new(),
        }
    }

    pub fn set_meta(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        assert!(!key.contains(' ') && !key.is_empty());
        assert!(!value.contains('\n'));
        if let Some(slot) = self.metadata.iter_mut().find(|(k, _)| k == key) {
            slot.1 = value;
        } else {
            self.metadata.push((key.to_string(), value));
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn push_row(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row arity mismatch");
        for (cell, ty) in row.iter().zip(&self.types) {
            assert_eq!(cell.col_type(), *ty, "cell type mismatch");
        }
        self.rows.push(row);
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn col_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn cell(&self, row: usize, col: &str) -> &Cell {
        let idx = self
            .col_index(col)
            .unwrap_or_else(|| panic!("no column named {col}"));
        &self.rows[row][idx]
    }

    /// Numeric view of a cell: ints widen to f64, text panics.
    pub fn number(&self, row: usize, col: &str) -> f64 {
        match self.cell(row, col) {
            Cell::Int(v) => *v as f64,
            Cell::Float(v) => *v,
            Cell::Text(t) => panic!("column {col} holds text {t:?}"),
        }
    }

    pub fn text_cell(&self, row: usize, col: &str) -> &str {
        match self.cell(row, col) {
            Cell::Text(t) => t.as_str(),
            other => panic!("column {col} holds {other:?}"),
        }
    }

    /// Row indices matching all `(column, text-value)` filters.
    pub fn select(&self, filters: &[(&str, &str)]) -> Vec<usize> {
        (0..self.rows.len())
            .filter(|&r| {
                filters
                    .iter()
                    .all(|(col, val)| self.text_cell(r, col) == *val)
            })
            .collect()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# {MAGIC}\n"));
        out.push_str(&format!(
            "# types {}\n",
            self.types
                .iter()
                .map(|t| t.as_str())
                .collect::<Vec<_>>()
                .join(",")
        ));
        for (k, v) in &self.metadata {
            out.push_str(&format!("# {k} {v}\n"));
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| c.csv()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn to_humane_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            out.push_str(&format!("# {k} {v}\n"));
        }
        let rendered: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|row| row.iter().map(|c| c.humane()).collect())
            .collect();
        let widths: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .map(|(j, name)| {
                rendered
                    .iter()
                    .map(|r| r[j].len())
                    .chain(std::iter::once(name.len()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let fmt_line = |cells: Vec<String>| -> String {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        out.push_str(&fmt_line(self.columns.clone()));
        out.push('\n');
        for row in rendered {
            out.push_str(&fmt_line(row));
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<ResultTable> {
        let mut metadata: Vec<(String, String)> = Vec::new();
        let mut types: Option<Vec<ColType>> = None;
        let mut header: Option<Vec<String>> = None;
        let mut rows: Vec<Vec<Cell>> = Vec::new();
        let mut saw_magic = false;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix("# ") {
                if meta == MAGIC {
                    saw_magic = true;
                    continue;
                }
                let (k, v) = meta.split_once(' ').unwrap_or((meta, ""));
                if k == "types" {
                    let parsed: Option<Vec<ColType>> = v.split(',').map(ColType::parse).collect();
                    types = Some(parsed.ok_or_else(|| NnlsError::Parse {
                        line: line_no,
                        message: format!("bad types line {v:?}"),
                    })?);
                } else {
                    metadata.push((k.to_string(), v.to_string()));
                }
                continue;
            }
            match (&header, &types) {
                (None, Some(_)) => {
                    header = Some(line.split(',').map(|s| s.to_string()).collect());
                }
                (_, None) => {
                    return Err(NnlsError::Parse {
                        line: line_no,
                        message: "missing '# types' metadata before header".into(),
                    });
                }
                (Some(cols), Some(tys)) => {
                    let fields: Vec<&str> = line.split(',').collect();
                    if fields.len() != cols.len() {
                        return Err(NnlsError::Parse {
                            line: line_no,
                            message: format!(
                                "row has {} fields, expected {}",
                                fields.len(),
                                cols.len()
                            ),
                        });
                    }
                    let mut row = Vec::with_capacity(fields.len());
                    for (field, ty) in fields.iter().zip(tys) {
                        let cell = match ty {
                            ColType::Int => {
                                Cell::Int(field.parse().map_err(|e| NnlsError::Parse {
                                    line: line_no,
                                    message: format!("bad int {field:?}: {e}"),
                                })?)
                            }
                            ColType::Float => {
                                Cell::Float(field.parse().map_err(|e| NnlsError::Parse {
                                    line: line_no,
                                    message: format!("bad float {field:?}: {e}"),
                                })?)
                            }
                            ColType::Text => Cell::Text(field.to_string()),
                        };
                        row.push(cell);
                    }
                    rows.push(row);
                }
            }
        }
        if !saw_magic {
            return Err(NnlsError::Parse {
                line: 1,
                message: format!("missing '# {MAGIC}' marker"),
            });
        }
        let types = types.ok_or_else(|| NnlsError::Parse {
            line: 0,
            message: "missing types metadata".into(),
        })?;
        let columns = header.ok_or_else(|| NnlsError::Parse {
            line: 0,
            message: "missing header row".into(),
        })?;
        if columns.len() != types.len() {
            return Err(NnlsError::Parse {
                line: 0,
                message: "types/header arity mismatch".into(),
            });
        }
        Ok(ResultTable {
            columns,
            types,
            rows,
            metadata,
        })
    }

    /// Compares data rows cell by cell (bitwise for floats), skipping the
    /// named columns; wall-clock columns are excluded this way when
    /// checking rerun determinism.
    pub fn rows_equal_ignoring(&self, other: &ResultTable, ignored: &[&str]) -> bool {
        if self.columns != other.columns || self.rows.len() != other.rows.len() {
            return false;
        }
        let skip: Vec<usize> = ignored.iter().filter_map(|c| self.col_index(c)).collect();
        self.rows.iter().zip(&other.rows).all(|(ra, rb)| {
            ra.iter()
                .zip(rb)
                .enumerate()
                .all(|(j, (ca, cb))| skip.contains(&j) || ca.same(cb))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ResultTable {
        let mut t = ResultTable::new(&[
            ("method", ColType::Text),
            ("trial", ColType::Int),
            ("value", ColType::Float),
        ]);
        t.set_meta("spec", "kind=timing m=4");
        t.push_row(vec![Cell::text("pgd"), Cell::Int(0), Cell::Float(0.1)]);
        t.push_row(vec![
            Cell::text("gd-2l"),
            Cell::Int(1),
            Cell::Float(f64::NAN),
        ]);
        t
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let t = sample();
        let csv = t.to_csv_string();
        let back = ResultTable::parse_csv(&csv).unwrap();
        assert!(t.rows_equal_ignoring(&back, &[]));
        assert_eq!(back.meta("spec"), Some("kind=timing m=4"));
    }

    #[test]
    fn empty_table_emits_header_only() {
        let t = ResultTable::new(&[("a", ColType::Int)]);
        let csv = t.to_csv_string();
        let data_lines: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data_lines, vec!["a"]);
        let back = ResultTable::parse_csv(&csv).unwrap();
        assert_eq!(back.n_rows(), 0);
    }

    #[test]
    fn humane_text_is_aligned() {
        let text = sample().to_humane_string();
        let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        let widths: Vec<usize> = lines.iter().map(|l| l.len()).collect();
        assert!(widths.windows(2).all(|w| w[0] == w[1]), "{text}");
    }

    #[test]
    fn ignored_columns_are_skipped_in_comparison() {
        let a = sample();
        let mut b = sample();
        b.rows[0][2] = Cell::Float(99.0);
        assert!(!a.rows_equal_ignoring(&b, &[]));
        assert!(a.rows_equal_ignoring(&b, &["value"]));
    }

    #[test]
    #[should_panic(expected = "row arity mismatch")]
    fn arity_mismatch_panics() {
        let mut t = ResultTable::new(&[("a", ColType::Int), ("b", ColType::Int)]);
        t.push_row(vec![Cell::Int(1)]);
    }
}
