use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{CliError, Result};

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Output {
        path: dir.to_path_buf(),
        source,
    })
}

fn out_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |source| CliError::Output {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes a numeric table. Values use the shortest representation that
/// reads back to the same `f64`.
pub fn write_table<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let file = fs::File::create(path).map_err(out_err(path))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let csv_err = |e: csv::Error| CliError::Output {
        path: path.to_path_buf(),
        source: e.into(),
    };
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        w.write_record(row.iter().map(|x| format!("{x:?}")))
            .map_err(csv_err)?;
    }
    w.flush().map_err(out_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    fs::write(path, text).map_err(out_err(path))
}

/// Reads a numeric table with the given header.
pub fn read_table(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |row: usize, message: String| {
        CliError::Core(seir_control::Error::Format(format!(
            "{} line {row}: {message}",
            path.display()
        )))
    };
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let found = reader.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    if found.iter().map(str::trim).ne(header.iter().copied()) {
        return Err(bad(1, format!("expected header `{}`", header.join(","))));
    }
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(k + 2, e.to_string()))?;
        let row = record
            .iter()
            .map(|cell| cell.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| bad(k + 2, "expected finite numbers".into()))?;
        rows.push(row);
    }
    Ok(rows)
}
