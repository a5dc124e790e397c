//! Training and test samples, and the CSV contract for user data.
//!
//! Training CSV: header `x1,…,xd,y`; a missing feature is an empty cell or
//! the literal `NA`. Test CSV: header `x1,…,xd`, every cell present. Rows in
//! error messages are 1-based data rows (the header is not counted).

use crate::error::{HamError, Result};
use crate::pattern::Pattern;
use std::io::Read;

/// A fully observed draw of `(X, Y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub y: u8,
}

/// A training triple `(X^O, Y, O)` with unobserved coordinates stored as 0.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedSample {
    x_masked: Vec<f64>,
    y: u8,
    o: Pattern,
}

impl MaskedSample {
    /// Masks `x` with `o`; the unobserved entries of `x` are discarded.
    pub fn new(x: &[f64], y: u8, o: Pattern) -> Result<Self> {
        if x.len() != o.d() {
            return Err(HamError::DimensionMismatch {
                expected: o.d(),
                found: x.len(),
            });
        }
        if y > 1 {
            return Err(HamError::InvalidParameter(format!("label {y} not in {{0,1}}")));
        }
        Ok(MaskedSample {
            x_masked: o.mask(x),
            y,
            o,
        })
    }

    pub fn fully_observed(x: &[f64], y: u8) -> Result<Self> {
        let o = Pattern::ones(x.len())?;
        Self::new(x, y, o)
    }

    pub fn x(&self) -> &[f64] {
        &self.x_masked
    }

    pub fn y(&self) -> u8 {
        self.y
    }

    pub fn o(&self) -> Pattern {
        self.o
    }

    pub fn d(&self) -> usize {
        self.o.d()
    }

    /// The same sample with the label replaced by `1 − y`.
    pub fn flipped(&self) -> Self {
        MaskedSample {
            x_masked: self.x_masked.clone(),
            y: 1 - self.y,
            o: self.o,
        }
    }
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c == "NA"
}

fn parse_cell(path: &str, row: usize, column: &str, cell: &str) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| HamError::Data {
        path: path.into(),
        row,
        column: column.into(),
        message: format!("'{cell}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(HamError::Data {
            path: path.into(),
            row,
            column: column.into(),
            message: format!("'{cell}' is not finite"),
        });
    }
    Ok(v)
}

fn feature_header(path: &str, header: &csv::StringRecord, with_label: bool) -> Result<usize> {
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let n_features = if with_label {
        if names.last() != Some(&"y") {
            return Err(HamError::Data {
                path: path.into(),
                row: 0,
                column: names.last().unwrap_or(&"").to_string(),
                message: "last header column must be 'y'".into(),
            });
        }
        names.len() - 1
    } else {
        names.len()
    };
    for (j, name) in names.iter().take(n_features).enumerate() {
        let expected = format!("x{}", j + 1);
        if *name != expected {
            return Err(HamError::Data {
                path: path.into(),
                row: 0,
                column: name.to_string(),
                message: format!("expected header '{expected}'"),
            });
        }
    }
    Pattern::zeros(n_features)?;
    Ok(n_features)
}

pub fn read_train_csv<R: Read>(reader: R, path: &str) -> Result<Vec<MaskedSample>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let header = rdr.headers()?.clone();
    let d = feature_header(path, &header, true)?;
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let mut x = vec![0.0; d];
        let mut flags = vec![false; d];
        for j in 0..d {
            let cell = &record[j];
            if !is_missing(cell) {
                x[j] = parse_cell(path, row, &header[j], cell)?;
                flags[j] = true;
            }
        }
        let label_cell = record[d].trim();
        let y = match label_cell {
            "0" => 0,
            "1" => 1,
            _ => {
                return Err(HamError::Data {
                    path: path.into(),
                    row,
                    column: "y".into(),
                    message: format!("label '{label_cell}' not in {{0,1}}"),
                })
            }
        };
        out.push(MaskedSample::new(&x, y, Pattern::from_flags(&flags)?)?);
    }
    if out.is_empty() {
        return Err(HamError::EmptyTrainingSet);
    }
    Ok(out)
}

pub fn read_test_csv<R: Read>(reader: R, path: &str) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let header = rdr.headers()?.clone();
    let d = feature_header(path, &header, false)?;
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let x = (0..d)
            .map(|j| {
                let cell = &record[j];
                if is_missing(cell) {
                    Err(HamError::Data {
                        path: path.into(),
                        row,
                        column: header[j].to_string(),
                        message: "missing value in test data".into(),
                    })
                } else {
                    parse_cell(path, row, &header[j], cell)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(x);
    }
    Ok(out)
}

fn fmt_cell(v: f64) -> String {
    format!("{v}")
}

/// Writes training samples in the training CSV layout, `NA` for missing cells.
pub fn write_train_csv<W: std::io::Write>(writer: W, samples: &[MaskedSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let d = samples.first().map(|s| s.d()).unwrap_or(0);
    let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    for s in samples {
        let mut rec: Vec<String> = (0..d)
            .map(|j| {
                if s.o().is_set(j) {
                    fmt_cell(s.x()[j])
                } else {
                    "NA".into()
                }
            })
            .collect();
        rec.push(s.y().to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_test_csv<W: std::io::Write>(writer: W, samples: &[LabeledSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let d = samples.first().map(|s| s.x.len()).unwrap_or(0);
    let header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    w.write_record(&header)?;
    for s in samples {
        w.write_record(s.x.iter().map(|v| fmt_cell(*v)))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masking_zeroes_unobserved() {
        let s = MaskedSample::new(&[1.5, -2.0, 3.0], 1, "101".parse().unwrap()).unwrap();
        assert_eq!(s.x(), &[1.5, 0.0, 3.0]);
        assert!(MaskedSample::new(&[1.0], 2, "1".parse().unwrap()).is_err());
        assert!(MaskedSample::new(&[1.0, 2.0], 0, "1".parse().unwrap()).is_err());
    }

    #[test]
    fn train_csv_accepts_empty_and_na() {
        let text = "x1,x2,y\n1.5,,1\nNA,2,0\n3,4,1\n";
        let rows = read_train_csv(text.as_bytes(), "t.csv").unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].o().to_string(), "10");
        assert_eq!(rows[1].o().to_string(), "01");
        assert_eq!(rows[1].x(), &[0.0, 2.0]);
        assert_eq!(rows[2].o().to_string(), "11");
    }

    #[test]
    fn train_csv_rejects_bad_label() {
        let err = read_train_csv("x1,y\n1,0\n2,2\n".as_bytes(), "t.csv").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("column y"), "{msg}");
    }

    #[test]
    fn train_csv_rejects_bad_header_and_number() {
        assert!(read_train_csv("a,y\n1,0\n".as_bytes(), "t.csv").is_err());
        let err = read_train_csv("x1,x2,y\n1,abc,0\n".as_bytes(), "t.csv").unwrap_err();
        assert!(err.to_string().contains("column x2"));
    }

    #[test]
    fn test_csv_names_missing_cell() {
        let err = read_test_csv("x1,x2\n1,2\n3,NA\n".as_bytes(), "q.csv").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("column x2"), "{msg}");
    }

    #[test]
    fn csv_round_trip() {
        let samples = vec![
            MaskedSample::new(&[0.25, 7.0], 1, "10".parse().unwrap()).unwrap(),
            MaskedSample::new(&[-1.0, 2.5], 0, "11".parse().unwrap()).unwrap(),
        ];
        let mut buf = Vec::new();
        write_train_csv(&mut buf, &samples).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "x1,x2,y\n0.25,NA,1\n-1,2.5,0\n");
        assert_eq!(read_train_csv(buf.as_slice(), "rt").unwrap(), samples);
    }
}
