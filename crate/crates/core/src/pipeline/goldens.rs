//! Column-wise comparison of an output directory against golden files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::{Error, Result};

/// Absolute tolerances: a default plus per-column overrides keyed by
/// `"file.csv:column"` or `"*:column"`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    pub default: f64,
    pub columns: BTreeMap<String, f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { default: 1e-8, columns: BTreeMap::new() }
    }
}

impl Tolerances {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
            path: origin.to_path_buf(),
            line: 0,
            message: e.message().to_string(),
        })?;
        let mut out = Tolerances::default();
        let as_f64 = |key: &str, v: &toml::Value| -> Result<f64> {
            v.as_float()
                .or_else(|| v.as_integer().map(|i| i as f64))
                .filter(|t| *t >= 0.0)
                .ok_or_else(|| Error::config(key, "tolerance must be a non-negative number"))
        };
        for (key, v) in &table {
            match (key.as_str(), v) {
                ("default", v) => out.default = as_f64("default", v)?,
                ("columns", toml::Value::Table(cols)) => {
                    for (c, t) in cols {
                        out.columns.insert(c.clone(), as_f64(c, t)?);
                    }
                }
                _ => return Err(Error::config(key, "unknown tolerance key")),
            }
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn for_column(&self, file: &str, column: &str) -> f64 {
        self.columns
            .get(&format!("{file}:{column}"))
            .or_else(|| self.columns.get(&format!("*:{column}")))
            .copied()
            .unwrap_or(self.default)
    }
}

/// Outcome for one golden file.
#[derive(Debug, Clone, PartialEq)]
pub enum FileDiff {
    Missing,
    Schema { missing: Vec<String>, extra: Vec<String> },
    RowCount { golden: usize, actual: usize },
    Compared {
        /// Largest `|actual − golden|` and where it occurred.
        worst: Option<Deviation>,
        /// Cells exceeding their tolerance.
        failures: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Deviation {
    pub column: String,
    pub row: usize,
    pub golden: String,
    pub actual: String,
    pub abs_diff: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffReport {
    pub files: Vec<(PathBuf, FileDiff)>,
}

impl DiffReport {
    pub fn passed(&self) -> bool {
        self.files
            .iter()
            .all(|(_, d)| matches!(d, FileDiff::Compared { failures: 0, .. }))
    }
}

impl fmt::Display for DiffReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (p, d) in &self.files {
            let name = p.display();
            match d {
                FileDiff::Missing => writeln!(f, "FAIL {name}: missing from output")?,
                FileDiff::Schema { missing, extra } => writeln!(
                    f,
                    "FAIL {name}: columns differ (missing: [{}], extra: [{}])",
                    missing.join(", "),
                    extra.join(", ")
                )?,
                FileDiff::RowCount { golden, actual } => {
                    writeln!(f, "FAIL {name}: {actual} rows, golden has {golden}")?
                }
                FileDiff::Compared { worst, failures } => {
                    let tag = if *failures == 0 { "ok  " } else { "FAIL" };
                    match worst {
                        Some(w) => writeln!(
                            f,
                            "{tag} {name}: {failures} cells out of tolerance; worst {} row {}: {} vs {} (|d|={:.3e}, tol {:.1e})",
                            w.column, w.row, w.actual, w.golden, w.abs_diff, w.tolerance
                        )?,
                        None => writeln!(f, "{tag} {name}: identical")?,
                    }
                }
            }
        }
        Ok(())
    }
}

struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let columns = lines
        .next()
        .map(|h| h.split(',').map(|s| s.trim().to_string()).collect())
        .unwrap_or_default();
    let rows = lines
        .map(|l| l.split(',').map(|s| s.trim().to_string()).collect())
        .collect();
    Ok(Table { columns, rows })
}

fn collect_csv(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_csv(root, &p, out)?;
        } else if p.extension().is_some_and(|e| e == "csv") {
            out.push(p.strip_prefix(root).unwrap_or(&p).to_path_buf());
        }
    }
    Ok(())
}

fn compare(golden: &Table, actual: &Table, file: &str, tol: &Tolerances) -> FileDiff {
    let missing: Vec<String> = golden
        .columns
        .iter()
        .filter(|c| !actual.columns.contains(c))
        .cloned()
        .collect();
    let extra: Vec<String> = actual
        .columns
        .iter()
        .filter(|c| !golden.columns.contains(c))
        .cloned()
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return FileDiff::Schema { missing, extra };
    }
    if golden.rows.len() != actual.rows.len() {
        return FileDiff::RowCount { golden: golden.rows.len(), actual: actual.rows.len() };
    }
    let mut worst: Option<Deviation> = None;
    let mut failures = 0;
    for (ci, col) in golden.columns.iter().enumerate() {
        let ai = actual.columns.iter().position(|c| c == col).expect("schema checked");
        let t = tol.for_column(file, col);
        for (row, (g, a)) in golden.rows.iter().zip(&actual.rows).enumerate() {
            let (gs, as_) = (g.get(ci).map_or("", String::as_str), a.get(ai).map_or("", String::as_str));
            let d = match (gs.parse::<f64>(), as_.parse::<f64>()) {
                (Ok(x), Ok(y)) if x.is_nan() && y.is_nan() => 0.0,
                (Ok(x), Ok(y)) => (x - y).abs(),
                _ if gs == as_ => 0.0,
                _ => f64::INFINITY,
            };
            let d = if d.is_nan() { f64::INFINITY } else { d };
            if d > t {
                failures += 1;
            }
            if d > 0.0 && worst.as_ref().is_none_or(|w| d > w.abs_diff) {
                worst = Some(Deviation {
                    column: col.clone(),
                    row,
                    golden: gs.to_string(),
                    actual: as_.to_string(),
                    abs_diff: d,
                    tolerance: t,
                });
            }
        }
    }
    FileDiff::Compared { worst, failures }
}

/// Compares every CSV under `golden` with its counterpart under `out`.
pub fn diff_goldens(out: &Path, golden: &Path, tolerances: &Tolerances) -> Result<DiffReport> {
    let mut names = Vec::new();
    collect_csv(golden, golden, &mut names)?;
    let mut files = Vec::new();
    for rel in names {
        let a = out.join(&rel);
        let diff = if !a.exists() {
            FileDiff::Missing
        } else {
            let file = rel.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            compare(&read_table(&golden.join(&rel))?, &read_table(&a)?, &file, tolerances)
        };
        files.push((rel, diff));
    }
    Ok(DiffReport { files })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) {
        std::fs::write(dir.join(name), text).unwrap();
    }

    #[test]
    fn detects_deviation_and_schema_change() {
        let g = tempfile::tempdir().unwrap();
        let o = tempfile::tempdir().unwrap();
        write(g.path(), "a.csv", "# h\nR,E\n1,2.0\n2,3.0\n");
        write(o.path(), "a.csv", "# other\nR,E\n1,2.0\n2,3.1\n");
        write(g.path(), "b.csv", "R,E\n1,2\n");
        write(o.path(), "b.csv", "R,F\n1,2\n");
        let rep = diff_goldens(o.path(), g.path(), &Tolerances::default()).unwrap();
        assert!(!rep.passed());
        match &rep.files[0].1 {
            FileDiff::Compared { worst: Some(w), failures: 1 } => {
                assert_eq!(w.column, "E");
                assert!((w.abs_diff - 0.1).abs() < 1e-12);
            }
            d => panic!("{d:?}"),
        }
        assert_eq!(
            rep.files[1].1,
            FileDiff::Schema { missing: vec!["E".into()], extra: vec!["F".into()] }
        );
        let loose = Tolerances::from_toml_str("default = 0.0\n[columns]\n\"a.csv:E\" = 0.2\n\"*:F\" = 1.0\n", Path::new("t")).unwrap();
        assert_eq!(loose.for_column("a.csv", "E"), 0.2);
        assert_eq!(loose.for_column("x.csv", "F"), 1.0);
        assert_eq!(loose.for_column("x.csv", "E"), 0.0);
    }

    #[test]
    fn identical_directories_pass() {
        let g = tempfile::tempdir().unwrap();
        write(g.path(), "a.csv", "R,S\n1,nan\n");
        let rep = diff_goldens(g.path(), g.path(), &Tolerances::default()).unwrap();
        assert!(rep.passed(), "{rep}");
    }
}
