//! CSV ingestion and export of semi-competing risks datasets.
//!
//! Header: `l,y1,delta1,y2,delta2` followed by `z1_1..z1_d1, z2_1..z2_d2,
//! z3_1..z3_d3`, or a shared block `z_1..z_d` used for all three transitions.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::domain::{validate_dataset, Dataset, DomainError, Severity, SubjectRecord};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot open {path}: {source}")]
    Open { path: String, source: std::io::Error },
    #[error("missing required column '{0}'")]
    MissingColumn(String),
    #[error("unrecognized column '{0}' (expected z1_j, z2_j, z3_j or z_j)")]
    UnknownColumn(String),
    #[error("covariate columns mix the shared z_j form with per-transition blocks")]
    MixedCovariates,
    #[error("covariate block {block} is missing column {block}_{index}")]
    CovariateGap { block: String, index: usize },
    #[error("row {row}, column '{column}': cannot parse '{value}'")]
    Parse { row: usize, column: String, value: String },
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("dataset has no rows")]
    Empty,
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

const REQUIRED: [&str; 5] = ["l", "y1", "delta1", "y2", "delta2"];

enum Layout {
    Shared(Vec<usize>),
    Blocks([Vec<usize>; 3]),
}

/// Column positions of the covariates, ordered by covariate index.
fn covariate_layout(headers: &csv::StringRecord) -> Result<Layout, IoError> {
    let mut shared: Vec<(usize, usize)> = Vec::new();
    let mut blocks: [Vec<(usize, usize)>; 3] = Default::default();
    for (pos, name) in headers.iter().enumerate() {
        let name = name.trim();
        if REQUIRED.contains(&name) {
            continue;
        }
        let (prefix, idx) = name.split_once('_').ok_or_else(|| IoError::UnknownColumn(name.into()))?;
        let idx: usize = idx.parse().map_err(|_| IoError::UnknownColumn(name.into()))?;
        match prefix {
            "z" => shared.push((idx, pos)),
            "z1" => blocks[0].push((idx, pos)),
            "z2" => blocks[1].push((idx, pos)),
            "z3" => blocks[2].push((idx, pos)),
            _ => return Err(IoError::UnknownColumn(name.into())),
        }
    }
    let ordered = |mut v: Vec<(usize, usize)>, label: &str| -> Result<Vec<usize>, IoError> {
        v.sort();
        for (expect, (idx, _)) in v.iter().enumerate() {
            if *idx != expect + 1 {
                return Err(IoError::CovariateGap {
                    block: label.into(),
                    index: expect + 1,
                });
            }
        }
        Ok(v.into_iter().map(|(_, p)| p).collect())
    };
    let any_block = blocks.iter().any(|b| !b.is_empty());
    if !shared.is_empty() && any_block {
        return Err(IoError::MixedCovariates);
    }
    if any_block {
        let [a, b, c] = blocks;
        Ok(Layout::Blocks([ordered(a, "z1")?, ordered(b, "z2")?, ordered(c, "z3")?]))
    } else {
        Ok(Layout::Shared(ordered(shared, "z")?))
    }
}

fn parse_field(rec: &csv::StringRecord, pos: usize, row: usize, column: &str) -> Result<f64, IoError> {
    let raw = rec.get(pos).unwrap_or("").trim();
    raw.parse::<f64>().map_err(|_| IoError::Parse {
        row,
        column: column.into(),
        value: raw.into(),
    })
}

fn parse_indicator(rec: &csv::StringRecord, pos: usize, row: usize, column: &str) -> Result<bool, IoError> {
    match rec.get(pos).unwrap_or("").trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(IoError::Parse {
            row,
            column: column.into(),
            value: other.into(),
        }),
    }
}

/// Reads and validates a dataset. Row numbers in errors are 1-based data
/// rows (the header is row 0).
pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset, IoError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| IoError::MissingColumn(name.into()))
    };
    let pos: Vec<usize> = REQUIRED.iter().map(|c| find(c)).collect::<Result<_, _>>()?;
    let layout = covariate_layout(&headers)?;
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let cov = |cols: &[usize]| -> Result<Vec<f64>, IoError> {
            cols.iter().map(|&p| parse_field(&rec, p, row, &headers[p])).collect()
        };
        let (z1, z2, z3) = match &layout {
            Layout::Shared(cols) => {
                let z = cov(cols)?;
                (z.clone(), z.clone(), z)
            }
            Layout::Blocks([a, b, c]) => (cov(a)?, cov(b)?, cov(c)?),
        };
        records.push(SubjectRecord {
            l: parse_field(&rec, pos[0], row, "l")?,
            y1: parse_field(&rec, pos[1], row, "y1")?,
            delta1: parse_indicator(&rec, pos[2], row, "delta1")?,
            y2: parse_field(&rec, pos[3], row, "y2")?,
            delta2: parse_indicator(&rec, pos[4], row, "delta2")?,
            z1,
            z2,
            z3,
        });
    }
    if records.is_empty() {
        return Err(IoError::Empty);
    }
    let data = Dataset::new(records)?;
    if let Some(v) = validate_dataset(&data).into_iter().find(|v| v.severity == Severity::Error) {
        return Err(IoError::Row {
            row: v.index + 1,
            message: v.to_string(),
        });
    }
    Ok(data)
}

pub fn read_dataset_path(path: &Path) -> Result<Dataset, IoError> {
    let file = std::fs::File::open(path).map_err(|source| IoError::Open {
        path: path.display().to_string(),
        source,
    })?;
    read_dataset(std::io::BufReader::new(file))
}

/// Writes the per-transition layout; floats use the shortest representation
/// that parses back to the same value.
pub fn write_dataset<W: Write>(data: &Dataset, writer: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    let dims = data.dims();
    let mut header: Vec<String> = REQUIRED.iter().map(|s| s.to_string()).collect();
    for (k, d) in dims.iter().enumerate() {
        header.extend((1..=*d).map(|j| format!("z{}_{j}", k + 1)));
    }
    w.write_record(&header)?;
    for r in data.records() {
        let mut row = vec![
            r.l.to_string(),
            r.y1.to_string(),
            u8::from(r.delta1).to_string(),
            r.y2.to_string(),
            u8::from(r.delta2).to_string(),
        ];
        row.extend(r.z1.iter().chain(&r.z2).chain(&r.z3).map(|z| z.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset_path(data: &Dataset, path: &Path) -> Result<(), IoError> {
    let file = std::fs::File::create(path)?;
    write_dataset(data, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TOY: &str = "l,y1,delta1,y2,delta2,z_1,z_2\n0,1.5,1,2.5,0,0.3,1\n0.2,2,0,2,1,-1,0\n";

    #[test]
    fn shared_covariates_expand() {
        let d = read_dataset(TOY.as_bytes()).unwrap();
        assert_eq!(d.dims(), [2, 2, 2]);
        assert_eq!(d.records()[1].z3, vec![-1.0, 0.0]);
    }

    #[test]
    fn missing_column_is_named() {
        let bad = "l,y1,delta1,y2,z_1\n0,1,0,1,0.5\n";
        let err = read_dataset(bad.as_bytes()).unwrap_err();
        assert!(matches!(&err, IoError::MissingColumn(c) if c == "delta2"), "{err}");
    }

    #[test]
    fn parse_error_reports_row_and_column() {
        let bad = "l,y1,delta1,y2,delta2,z_1\n0,1,0,1,0,0.5\n0,abc,0,1,0,0.5\n";
        let err = read_dataset(bad.as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "row 2, column 'y1': cannot parse 'abc'");
        let bad = "l,y1,delta1,y2,delta2,z_1\n0,1,2,1,0,0.5\n";
        assert!(matches!(read_dataset(bad.as_bytes()).unwrap_err(), IoError::Parse { row: 1, .. }));
    }

    #[test]
    fn invalid_record_reports_row() {
        let bad = "l,y1,delta1,y2,delta2,z_1\n0,1,0,1,0,0.5\n3,1,0,1,0,0.5\n";
        let err = read_dataset(bad.as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "row 2: l < y1 failed at index 1");
    }

    #[test]
    fn gaps_and_mixtures_rejected() {
        let gap = "l,y1,delta1,y2,delta2,z_1,z_3\n0,1,0,1,0,0.5,1\n";
        assert!(matches!(read_dataset(gap.as_bytes()).unwrap_err(), IoError::CovariateGap { .. }));
        let mixed = "l,y1,delta1,y2,delta2,z_1,z1_1\n0,1,0,1,0,0.5,1\n";
        assert!(matches!(read_dataset(mixed.as_bytes()).unwrap_err(), IoError::MixedCovariates));
        assert!(matches!(read_dataset("l,y1,delta1,y2,delta2\n".as_bytes()).unwrap_err(), IoError::Empty));
    }

    proptest! {
        #[test]
        fn round_trip_is_lossless(rows in prop::collection::vec((0.0f64..1.0, 1e-3f64..5.0, any::<bool>(), 0.0f64..5.0, any::<bool>(), -1e3f64..1e3, -1e-8f64..1e-8), 1..20)) {
            let records: Vec<SubjectRecord> = rows.iter().map(|&(l, g, d1, s, d2, z, w)| {
                let y1 = l + g;
                SubjectRecord { l, y1, delta1: d1, y2: if d1 { y1 + s } else { y1 }, delta2: d2, z1: vec![z, w], z2: vec![w], z3: vec![] }
            }).collect();
            let data = Dataset::new(records).unwrap();
            let mut buf = Vec::new();
            write_dataset(&data, &mut buf).unwrap();
            let back = read_dataset(buf.as_slice()).unwrap();
            prop_assert_eq!(back.records(), data.records());
        }
    }
}
