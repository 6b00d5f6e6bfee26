//! CSV tables with full-precision numbers.

use crate::error::{CliError, CliResult};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Bool(bool),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) if v.is_nan() => "NaN".into(),
            Cell::Num(v) if v.is_infinite() => if *v > 0.0 { "inf" } else { "-inf" }.into(),
            Cell::Num(v) => format!("{v:.16e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    /// File name inside the output directory.
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.to_string(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header of {}", self.name);
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join(&self.name);
        let csv_err = |e: csv::Error| CliError::Format { path: path.display().to_string(), reason: e.to_string() };
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        w.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(csv_err)?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let fmt = |reason: String| CliError::Format { path: path.display().to_string(), reason };
        let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut r = csv::Reader::from_reader(file);
        let columns: Vec<String> = r.headers().map_err(|e| fmt(e.to_string()))?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| fmt(e.to_string()))?;
            rows.push(rec.iter().map(|s| Cell::Text(s.to_string())).collect());
        }
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(Self { name, columns, rows })
    }

    fn index(&self, column: &str) -> CliResult<usize> {
        self.columns
            .iter()
            .position(|c| c == column)
            .ok_or_else(|| CliError::MissingColumn { table: self.name.clone(), column: column.to_string() })
    }

    fn bad(&self, column: &str, row: usize, what: &str) -> CliError {
        CliError::Format { path: self.name.clone(), reason: format!("row {}: column `{column}` is not {what}", row + 1) }
    }

    pub fn f64s(&self, column: &str) -> CliResult<Vec<f64>> {
        let j = self.index(column)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| match &r[j] {
                Cell::Num(v) => Ok(*v),
                Cell::Int(v) => Ok(*v as f64),
                Cell::Text(s) => s.parse::<f64>().map_err(|_| self.bad(column, i, "a number")),
                Cell::Bool(_) => Err(self.bad(column, i, "a number")),
            })
            .collect()
    }

    pub fn bools(&self, column: &str) -> CliResult<Vec<bool>> {
        let j = self.index(column)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| match &r[j] {
                Cell::Bool(b) => Ok(*b),
                Cell::Text(s) => s.parse::<bool>().map_err(|_| self.bad(column, i, "a boolean")),
                _ => Err(self.bad(column, i, "a boolean")),
            })
            .collect()
    }

    pub fn strings(&self, column: &str) -> CliResult<Vec<String>> {
        let j = self.index(column)?;
        Ok(self.rows.iter().map(|r| r[j].render()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        let dir = std::env::temp_dir().join(format!("efree-table-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let mut t = Table::new("t.csv", &["a", "b", "c"]);
        let vals = [0.1 + 0.2, -1e-300, std::f64::consts::PI, f64::NAN];
        for v in vals {
            t.push(vec![v.into(), Cell::Int(3), "s".into()]);
        }
        let path = t.write(&dir).unwrap();
        let back = Table::read(&path).unwrap();
        let a = back.f64s("a").unwrap();
        for (x, y) in vals.iter().zip(&a) {
            assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
        }
        assert!(matches!(back.f64s("zz"), Err(CliError::MissingColumn { .. })));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
