use std::io::Read;

use super::{AnalyticsError, LikertVector};

/// Reads delimited survey responses: a header row of item labels, then one
/// row per respondent. Blank cells are treated as missing responses.
pub fn read_survey<R: Read>(input: R, delimiter: u8) -> Result<Vec<LikertVector>, AnalyticsError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| AnalyticsError::Survey { row: 1, message: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(AnalyticsError::Survey { row: 1, message: "missing header".into() });
    }
    let mut columns: Vec<Vec<u8>> = vec![Vec::new(); headers.len()];
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| AnalyticsError::Survey { row, message: e.to_string() })?;
        for (c, cell) in rec.iter().enumerate() {
            if cell.is_empty() {
                continue;
            }
            let v: i64 = cell.parse().map_err(|_| AnalyticsError::Survey {
                row,
                message: format!("`{cell}` is not an integer"),
            })?;
            if !(1..=5).contains(&v) {
                return Err(AnalyticsError::OutOfRange { item: headers[c].clone(), value: v });
            }
            columns[c].push(v as u8);
        }
    }
    headers
        .into_iter()
        .zip(columns)
        .map(|(h, v)| LikertVector::new(h, v))
        .collect()
}
