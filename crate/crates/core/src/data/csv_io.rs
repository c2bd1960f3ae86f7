use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Reads a comma-separated numeric file. `label_column` is a zero-based
/// column index; every other column becomes a feature, in file order.
/// Row numbers in errors are 1-based file lines.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: usize,
    class_count: usize,
    has_header: bool,
) -> Result<Dataset> {
    let path = path.as_ref();
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => parse_err(0, format!("{other:?}")),
        })?;

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line() as usize);
            parse_err(row, e.to_string())
        })?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        if label_column >= record.len() {
            return Err(parse_err(
                row,
                format!("label column {label_column} missing ({} columns)", record.len()),
            ));
        }
        let features = record.len() - 1;
        if *width.get_or_insert(features) != features {
            return Err(parse_err(row, format!("expected {} feature columns", features)));
        }
        for (col, field) in record.iter().enumerate() {
            let value: f64 = field
                .parse()
                .map_err(|_| parse_err(row, format!("column {col}: '{field}' is not a number")))?;
            if col == label_column {
                if value.fract() != 0.0 || value < 0.0 || value >= class_count as f64 {
                    return Err(parse_err(
                        row,
                        format!("label {field} outside [0, {class_count})"),
                    ));
                }
                labels.push(value as usize);
            } else {
                if value.is_nan() {
                    return Err(parse_err(row, format!("column {col}: NaN feature")));
                }
                data.push(value);
            }
        }
    }
    let name = path
        .file_stem()
        .map_or_else(|| "csv".to_string(), |s| s.to_string_lossy().into_owned());
    let features = Matrix::from_vec(labels.len(), width.unwrap_or(0), data);
    Dataset::new(name, features, labels, class_count)
}

/// Writes features followed by the label as the last column. The header,
/// when requested, is `x0,...,x{d-1},label`.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>, header: bool) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_to_io)?;
    if header {
        let mut names: Vec<String> = (0..dataset.dim()).map(|j| format!("x{j}")).collect();
        names.push("label".into());
        writer.write_record(&names).map_err(csv_to_io)?;
    }
    for i in 0..dataset.len() {
        let mut fields: Vec<String> = dataset.features().row(i).iter().map(f64::to_string).collect();
        fields.push(dataset.labels()[i].to_string());
        writer.write_record(&fields).map_err(csv_to_io)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_to_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
