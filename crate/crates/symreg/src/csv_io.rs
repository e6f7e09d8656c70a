//! Headered numeric CSV files.

use std::path::Path;

use symreg_core::expr::DataMatrix;

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("{0}: file has no data rows")]
    EmptyFile(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("non-numeric cell {value:?} at row {row}, column `{column}`")]
    NonNumericCell { row: usize, column: String, value: String },
    #[error("{path}: {source}")]
    Read {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("the file needs at least one predictor column besides `{0}`")]
    NoPredictors(String),
}

/// Column-major numeric table with its header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    /// Index of the column named `name`, ignoring ASCII case.
    pub fn position(&self, name: &str) -> Result<usize, CsvError> {
        self.headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| CsvError::MissingColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<&[f64], CsvError> {
        Ok(&self.columns[self.position(name)?])
    }
}

pub fn parse_table(text: &str, source: &str) -> Result<Table, CsvError> {
    let read_err = |e| CsvError::Read {
        path: source.to_string(),
        source: e,
    };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers().map_err(read_err)?.iter().map(str::to_string).collect();
    let mut columns = vec![Vec::new(); headers.len()];
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(read_err)?;
        for ((cell, column), name) in record.iter().zip(&mut columns).zip(&headers) {
            let v = cell.parse::<f64>().map_err(|_| CsvError::NonNumericCell {
                row: i + 1,
                column: name.clone(),
                value: cell.to_string(),
            })?;
            column.push(v);
        }
    }
    if headers.is_empty() || columns[0].is_empty() {
        return Err(CsvError::EmptyFile(source.to_string()));
    }
    Ok(Table { headers, columns })
}

pub fn read_table(path: &Path) -> Result<Table, CsvError> {
    let text = std::fs::read_to_string(path).map_err(|e| CsvError::Read {
        path: path.display().to_string(),
        source: e.into(),
    })?;
    parse_table(&text, &path.display().to_string())
}

/// Predictors are every column except `target`, in header order.
pub fn table_to_data(table: &Table, target: &str) -> Result<(DataMatrix, Vec<String>), CsvError> {
    let t = table.position(target)?;
    let names: Vec<String> = table.headers.iter().enumerate().filter(|(i, _)| *i != t).map(|(_, h)| h.clone()).collect();
    if names.is_empty() {
        return Err(CsvError::NoPredictors(target.to_string()));
    }
    let columns = table.columns.iter().enumerate().filter(|(i, _)| *i != t).map(|(_, c)| c.clone()).collect();
    let data = DataMatrix::from_columns(columns, Some(table.columns[t].clone())).expect("csv columns share one length");
    Ok((data, names))
}

pub fn load_csv(path: &Path, target: &str) -> Result<(DataMatrix, Vec<String>), CsvError> {
    table_to_data(&read_table(path)?, target)
}

/// Renders predictors and response as CSV text.
pub fn render_dataset(data: &DataMatrix, names: &[String], target: &str) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = names.iter().map(String::as_str).collect();
    header.push(target);
    w.write_record(&header).expect("in-memory write");
    let y = data.y().unwrap_or(&[]);
    for i in 0..data.n() {
        let mut row: Vec<String> = data.row(i).iter().map(|v| format!("{v:?}")).collect();
        if let Some(v) = y.get(i) {
            row.push(format!("{v:?}"));
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}
