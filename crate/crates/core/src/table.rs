//! Numeric CSV tables: UTF-8, comma separated, `.` as the decimal point.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// Column names when the file had a header row.
    pub header: Option<Vec<String>>,
    pub values: Array2<f64>,
}

impl Table {
    /// Splits off the last column, e.g. the label of a training file.
    pub fn split_last(&self) -> Result<(Array2<f64>, Vec<f64>)> {
        let d = self.values.ncols();
        if d < 2 {
            return Err(Error::InvalidData(
                "a labelled table needs at least one feature and a label column".into(),
            ));
        }
        let x = self.values.slice(ndarray::s![.., ..d - 1]).to_owned();
        Ok((x, self.values.column(d - 1).to_vec()))
    }
}

pub fn read_table<R: Read>(input: R, has_header: bool) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = if has_header {
        Some(
            reader
                .headers()
                .map_err(csv_err)?
                .iter()
                .map(str::to_string)
                .collect::<Vec<_>>(),
        )
    } else {
        None
    };
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let line = i + 1 + usize::from(has_header);
        if record.iter().all(str::is_empty) {
            continue;
        }
        if *width.get_or_insert(record.len()) != record.len() {
            return Err(Error::InvalidData(format!(
                "line {line}: expected {} fields, found {}",
                width.unwrap(),
                record.len()
            )));
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::InvalidData(format!(
                    "line {line}, column {}: {field:?} is not a number",
                    j + 1
                ))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    let width = width.or(header.as_ref().map(Vec::len)).unwrap_or(0);
    let values = Array2::from_shape_vec((rows, width), data)
        .map_err(|e| Error::InvalidData(e.to_string()))?;
    Ok(Table { header, values })
}

pub fn read_table_file(path: impl AsRef<Path>, has_header: bool) -> Result<Table> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    read_table(std::io::BufReader::new(f), has_header)
}

pub fn write_table<W: Write>(out: W, header: &[String], values: &Array2<f64>) -> Result<()> {
    if header.len() != values.ncols() {
        return Err(Error::dim(format!(
            "{} column names for {} columns",
            header.len(),
            values.ncols()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_err)?;
    for row in values.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidData(format!("csv: {e}"))
}
