//! CSV reading and writing: comma separated, double-quote escaping,
//! header row required.

use std::io::{Read, Write};
use std::path::Path;

use crate::codec::TableSchema;
use crate::error::{Error, Result};

/// Reads a CSV and returns its cells in schema column order. Extra CSV
/// columns are ignored; a missing schema column is an error.
pub fn read_table<R: Read>(reader: R, schema: &TableSchema) -> Result<Vec<Vec<String>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let positions = schema
        .columns
        .iter()
        .map(|c| {
            header.iter().position(|h| h == &c.name).ok_or_else(|| {
                Error::Schema(format!("column `{}` is missing from the CSV header", c.name))
            })
        })
        .collect::<Result<Vec<usize>>>()?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        rows.push(
            positions
                .iter()
                .map(|&p| record.get(p).unwrap_or("").to_string())
                .collect(),
        );
    }
    Ok(rows)
}

pub fn read_table_file(path: &Path, schema: &TableSchema) -> Result<Vec<Vec<String>>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    read_table(std::io::BufReader::new(file), schema)
}

pub fn write_table<W: Write>(writer: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table_file(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_table(std::io::BufWriter::new(file), header, rows)
}
