use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Matrix;

/// Rows of features with optional integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(rows),
            labels: self.labels.as_ref().map(|l| rows.iter().map(|&r| l[r]).collect()),
        }
    }
}

/// Reads comma-separated rows; with `has_labels` the final column is a
/// non-negative integer label.
pub fn load_dataset(path: &Path, has_labels: bool) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_dataset(file, has_labels)
}

pub fn read_dataset<R: std::io::Read>(reader: R, has_labels: bool) -> Result<Dataset> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0;
    for record in csv.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map_or(rows + 1, |p| p.line() as usize);
        let fields: Vec<&str> = record.iter().collect();
        let features = if has_labels {
            if fields.len() < 2 {
                return Err(Error::Parse {
                    line,
                    message: "a labelled row needs at least one feature and a label".into(),
                });
            }
            let raw = fields[fields.len() - 1];
            let label = raw.parse::<usize>().map_err(|_| Error::Parse {
                line,
                message: format!("label `{raw}` is not a non-negative integer"),
            })?;
            labels.push(label);
            &fields[..fields.len() - 1]
        } else {
            &fields[..]
        };
        match width {
            None => width = Some(features.len()),
            Some(w) if w != features.len() => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {w} features, found {}", features.len()),
                });
            }
            Some(_) => {}
        }
        for f in features {
            let v = f.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("`{f}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("`{f}` is not finite"),
                });
            }
            data.push(v);
        }
        rows += 1;
    }
    let Some(cols) = width else {
        return Err(Error::domain("dataset is empty"));
    };
    Ok(Dataset {
        x: Matrix::from_vec(rows, cols, data)?,
        labels: has_labels.then_some(labels),
    })
}

/// Reads one non-negative integer per line; blank lines are skipped.
pub fn read_labels<R: std::io::BufRead>(reader: R) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        out.push(t.parse::<usize>().map_err(|_| Error::Parse {
            line: i + 1,
            message: format!("`{t}` is not a non-negative integer label"),
        })?);
    }
    if out.is_empty() {
        return Err(Error::domain("label file is empty"));
    }
    Ok(out)
}

pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    read_labels(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Writes rows as CSV, appending the label column when present.
pub fn save_dataset(path: &Path, x: &Matrix, labels: Option<&[usize]>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_dataset(file, x, labels)
}

pub fn write_dataset<W: std::io::Write>(writer: W, x: &Matrix, labels: Option<&[usize]>) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != x.rows() {
            return Err(Error::shape(format!("{} labels for {} rows", l.len(), x.rows())));
        }
    }
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    for (i, row) in x.row_iter().enumerate() {
        let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(l) = labels {
            fields.push(l[i].to_string());
        }
        out.write_record(&fields).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_plain_rows() {
        let d = read_dataset("1.0,2.0\n3.0,4.0".as_bytes(), false).unwrap();
        assert_eq!(d.x, Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap());
        assert!(d.labels.is_none());
    }

    #[test]
    fn parses_labels() {
        let d = read_dataset("1.0,2.0,0\n3.0,4.0,1".as_bytes(), true).unwrap();
        assert_eq!(d.x.shape(), (2, 2));
        assert_eq!(d.labels, Some(vec![0, 1]));
    }

    #[test]
    fn ragged_row_names_line() {
        let err = read_dataset("1.0,2.0\n3.0\n".as_bytes(), false).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn bad_values() {
        assert!(matches!(
            read_dataset("1.0,x\n".as_bytes(), false),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            read_dataset("1.0,2.0,-1\n".as_bytes(), true),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(read_dataset("".as_bytes(), false), Err(Error::Domain(_))));
    }

    #[test]
    fn label_files() {
        assert_eq!(read_labels("0\n2\n\n1\n".as_bytes()).unwrap(), vec![0, 2, 1]);
        assert!(matches!(read_labels("0\nx\n".as_bytes()), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(read_labels("".as_bytes()), Err(Error::Domain(_))));
    }

    #[test]
    fn write_then_read_is_exact() {
        let x = Matrix::from_rows(&[[0.1, -2.5e-7], [1.0 / 3.0, 1e300]]).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &x, Some(&[3, 0])).unwrap();
        let d = read_dataset(buf.as_slice(), true).unwrap();
        assert_eq!(d.x, x);
        assert_eq!(d.labels, Some(vec![3, 0]));
    }
}
