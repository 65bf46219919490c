use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::{class_to_label, label_to_class, Dataset};
use crate::error::{GpcError, Result};

/// CSV layout options.
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// 0-based label column; `None` means the last column.
    pub label_column: Option<usize>,
    /// `None` detects a header: a first row with no numeric field.
    pub has_header: Option<bool>,
}

struct RawTable {
    /// (line, fields)
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table(path: &Path, opts: &LoadOptions) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record
            .position()
            .map_or(rows.len() + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        rows.push((line, record.iter().map(str::to_owned).collect::<Vec<_>>()));
    }
    let header = match opts.has_header {
        Some(h) => h,
        None => rows
            .first()
            .is_some_and(|(_, f)| f.iter().all(|v| v.parse::<f64>().is_err())),
    };
    if header && !rows.is_empty() {
        rows.remove(0);
    }
    if rows.is_empty() {
        return Err(GpcError::InvalidArgument(format!(
            "{} contains no data rows",
            path.display()
        )));
    }
    Ok(RawTable { rows })
}

fn parse_numeric(table: &RawTable, opts: &LoadOptions) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let width = table.rows[0].1.len();
    if width < 2 {
        return Err(GpcError::InvalidArgument(
            "need at least one feature column and a label column".into(),
        ));
    }
    let label_col = opts.label_column.unwrap_or(width - 1);
    if label_col >= width {
        return Err(GpcError::InvalidArgument(format!(
            "label column {} out of range for {width} columns",
            label_col + 1
        )));
    }
    let n = table.rows.len();
    let mut feats = Vec::with_capacity(n * (width - 1));
    let mut labels = Vec::with_capacity(n);
    for (line, fields) in &table.rows {
        if fields.len() != width {
            return Err(GpcError::InconsistentWidth {
                row: *line,
                expected: width,
                found: fields.len(),
            });
        }
        for (j, f) in fields.iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| GpcError::Parse {
                row: *line,
                column: j + 1,
                message: format!("'{f}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(GpcError::Parse {
                    row: *line,
                    column: j + 1,
                    message: format!("'{f}' is not finite"),
                });
            }
            if j == label_col {
                labels.push(v);
            } else {
                feats.push(v);
            }
        }
    }
    Ok((DMatrix::from_row_slice(n, width - 1, &feats), labels))
}

/// Loads a numeric CSV, inferring the classes from the distinct label
/// values. Two values map to `−1/+1` in sorted order; more map to `1..=C`.
pub fn load_csv(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset> {
    let table = read_table(path.as_ref(), opts)?;
    let (x, labels) = parse_numeric(&table, opts)?;
    let mut map = labels.clone();
    map.sort_by(f64::total_cmp);
    map.dedup();
    if map.len() < 2 {
        return Err(GpcError::InvalidArgument(format!(
            "found {} distinct label(s); classification needs at least 2",
            map.len()
        )));
    }
    build(x, &labels, map, &table)
}

/// Loads a CSV whose labels must belong to an existing `label_map`, such as
/// a test set for a trained model.
pub fn load_csv_with_labels(
    path: impl AsRef<Path>,
    opts: &LoadOptions,
    label_map: &[f64],
) -> Result<Dataset> {
    let table = read_table(path.as_ref(), opts)?;
    let (x, labels) = parse_numeric(&table, opts)?;
    build(x, &labels, label_map.to_vec(), &table)
}

/// Loads a CSV whose columns are all features, for unlabelled inputs.
pub fn load_features(path: impl AsRef<Path>, has_header: Option<bool>) -> Result<DMatrix<f64>> {
    let opts = LoadOptions {
        label_column: None,
        has_header,
    };
    let table = read_table(path.as_ref(), &opts)?;
    let width = table.rows[0].1.len();
    let mut vals = Vec::with_capacity(table.rows.len() * width);
    for (line, fields) in &table.rows {
        if fields.len() != width {
            return Err(GpcError::InconsistentWidth {
                row: *line,
                expected: width,
                found: fields.len(),
            });
        }
        for (j, f) in fields.iter().enumerate() {
            match f.parse::<f64>() {
                Ok(v) if v.is_finite() => vals.push(v),
                _ => {
                    return Err(GpcError::Parse {
                        row: *line,
                        column: j + 1,
                        message: format!("'{f}' is not a finite number"),
                    })
                }
            }
        }
    }
    Ok(DMatrix::from_row_slice(table.rows.len(), width, &vals))
}

fn build(x: DMatrix<f64>, labels: &[f64], map: Vec<f64>, table: &RawTable) -> Result<Dataset> {
    let c = map.len();
    let label_col = x.ncols() + 1;
    let mut y = Vec::with_capacity(labels.len());
    for (i, &l) in labels.iter().enumerate() {
        let k = map
            .iter()
            .position(|&m| m == l)
            .ok_or_else(|| GpcError::Parse {
                row: table.rows[i].0,
                column: label_col,
                message: format!("label {l} is not one of the known classes {map:?}"),
            })?;
        y.push(class_to_label(k, c));
    }
    let ds = Dataset {
        x,
        y,
        num_classes: c,
        label_map: map,
        normalization: None,
    };
    ds.validate()?;
    Ok(ds)
}

/// Writes features and original label values, features first and the label
/// last. Each entry of `comments` becomes a `# ` line above the data.
pub fn save_csv(
    ds: &Dataset,
    path: impl AsRef<Path>,
    header: Option<&[String]>,
    comments: &[String],
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::WriterBuilder::new().from_writer(out);
    if let Some(h) = header {
        w.write_record(h)?;
    }
    let mut fields = Vec::with_capacity(ds.dim() + 1);
    for i in 0..ds.len() {
        fields.clear();
        fields.extend(ds.x.row(i).iter().map(|v| format!("{v}")));
        let k = label_to_class(ds.y[i], ds.num_classes);
        fields.push(format!("{}", ds.label_map[k]));
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}
