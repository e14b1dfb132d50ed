//! Dataset ingestion and result files.
//!
//! Dense CSV is comma-separated with `.` decimals; a single non-numeric first
//! line is taken as a header. IDX image files use the big-endian `0x00000803`
//! layout (unsigned bytes, three dimensions). Every file written here is
//! staged next to its destination and renamed into place.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph_kernel::DataMatrix;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    CsvDense,
    IdxImages,
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" | "csv_dense" => Ok(DataFormat::CsvDense),
            "idx" | "idx_images" => Ok(DataFormat::IdxImages),
            other => Err(Error::Config(format!("unknown data format '{other}'"))),
        }
    }
}

/// Parses a numeric CSV into a matrix without rescaling.
pub fn read_csv_matrix(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path)?;
    parse_csv_matrix(&text)
}

pub fn parse_csv_matrix(text: &str) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(idx + 1, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(|f| f.parse::<f64>()).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if idx == 0 => continue,
            Err(e) => {
                return Err(Error::Parse {
                    line,
                    message: e.to_string(),
                })
            }
        };
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {w} fields, found {}", row.len()),
                })
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    let cols = width.unwrap_or(0);
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::InvalidInput(e.to_string()))
}

/// Raw IDX image payload scaled by 1/255, one flattened image per row.
pub fn read_idx_images(path: &Path) -> Result<Array2<f64>> {
    parse_idx_images(&fs::read(path)?)
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<Array2<f64>> {
    let header = |pos: usize| -> Result<u32> {
        bytes
            .get(pos..pos + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| Error::InvalidInput("truncated IDX header".into()))
    };
    let magic = header(0)?;
    if magic != 0x0000_0803 {
        return Err(Error::InvalidInput(format!(
            "IDX magic {magic:#010x}, expected 0x00000803"
        )));
    }
    let n = header(4)? as usize;
    let rows = header(8)? as usize;
    let cols = header(12)? as usize;
    let payload = &bytes[16..];
    let expected = n * rows * cols;
    if payload.len() != expected {
        return Err(Error::InvalidInput(format!(
            "IDX payload has {} bytes, expected {expected}",
            payload.len()
        )));
    }
    let values = payload.iter().map(|&b| b as f64 / 255.0).collect();
    Array2::from_shape_vec((n, rows * cols), values).map_err(|e| Error::InvalidInput(e.to_string()))
}

/// Loads features in `format` and min-max rescales every column to `[0, 1]`.
pub fn load_dataset(path: &Path, format: DataFormat) -> Result<DataMatrix> {
    let raw = match format {
        DataFormat::CsvDense => read_csv_matrix(path)?,
        DataFormat::IdxImages => read_idx_images(path)?,
    };
    DataMatrix::rescaled(raw)
}

/// One integer label per line; blank lines are skipped.
pub fn parse_labels(text: &str) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let t = l.trim();
            t.parse::<usize>()
                .or_else(|_| match t.parse::<f64>() {
                    Ok(v) if v >= 0.0 && v.fract() == 0.0 => Ok(v as usize),
                    _ => Err(()),
                })
                .map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("'{t}' is not a nonnegative integer label"),
                })
        })
        .collect()
}

/// Reads labels and checks there is one per sample.
pub fn load_labels(path: &Path, expected: usize) -> Result<Vec<usize>> {
    let labels = parse_labels(&fs::read_to_string(path)?)?;
    if labels.len() != expected {
        return Err(Error::InvalidInput(format!(
            "{} labels for {expected} samples",
            labels.len()
        )));
    }
    Ok(labels)
}

/// Writes `contents` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn format_matrix_csv(m: ArrayView2<'_, f64>) -> String {
    let mut out = String::new();
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn format_labels(labels: &[usize]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}

/// `i,j,weight` for every stored entry with `i <= j`.
pub fn format_edge_list(adjacency: &CsrMatrix) -> String {
    let mut out = String::from("i,j,weight\n");
    for (i, j, w) in adjacency.triplets().filter(|&(i, j, _)| i <= j) {
        out.push_str(&format!("{i},{j},{w}\n"));
    }
    out
}

/// Inverse of [`format_edge_list`]: a symmetric `n × n` matrix.
pub fn parse_edge_list(text: &str, n: usize) -> Result<CsrMatrix> {
    let m = parse_csv_matrix(text)?;
    if m.ncols() != 3 && m.nrows() > 0 {
        return Err(Error::InvalidInput("edge list needs 3 columns".into()));
    }
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (line, r) in m.rows().into_iter().enumerate() {
        let (i, j) = (r[0] as usize, r[1] as usize);
        if i >= n || j >= n || r[0].fract() != 0.0 || r[1].fract() != 0.0 {
            return Err(Error::Parse {
                line: line + 2,
                message: format!("bad edge ({}, {})", r[0], r[1]),
            });
        }
        rows[i].push((j, r[2]));
        if i != j {
            rows[j].push((i, r[2]));
        }
    }
    CsrMatrix::from_rows(n, rows)
}

/// One JSON document per line.
pub fn format_json_lines<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn csv_with_header_and_rescale() {
        let m = parse_csv_matrix("a,b\n0,10\n5,20\n").unwrap();
        assert_eq!(m, array![[0.0, 10.0], [5.0, 20.0]]);
        let x = DataMatrix::rescaled(m).unwrap();
        assert_eq!(x.view(), array![[0.0, 0.0], [1.0, 1.0]]);
    }

    #[test]
    fn csv_width_mismatch_reports_line() {
        match parse_csv_matrix("1,2\n3,4\n5\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_bad_number_after_first_line() {
        match parse_csv_matrix("1,2\n3,x\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn constant_column_becomes_zero() {
        let x = DataMatrix::rescaled(parse_csv_matrix("1,7\n2,7\n3,7\n").unwrap()).unwrap();
        assert!(x.view().column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn idx_images_fixture() {
        let mut bytes = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28];
        let first: Vec<u8> = (0..784).map(|i| (i % 256) as u8).collect();
        let second: Vec<u8> = (0..784).map(|i| 255 - (i % 200) as u8).collect();
        bytes.extend(&first);
        bytes.extend(&second);
        let raw = parse_idx_images(&bytes).unwrap();
        assert_eq!(raw.dim(), (2, 784));
        assert_eq!(raw[[0, 255]], 1.0);
        assert_eq!(raw[[1, 0]], 1.0);
        let x = DataMatrix::rescaled(raw).unwrap();
        // two samples: each non-constant column maps to {0, 1}
        assert_eq!(x.view()[[0, 1]], 0.0);
        assert_eq!(x.view()[[1, 1]], 1.0);
        assert!(x.view().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn idx_rejects_wrong_magic_and_length() {
        assert!(parse_idx_images(&[0, 0, 8, 1, 0, 0, 0, 0]).is_err());
        assert!(parse_idx_images(&[0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 1]).is_err());
    }

    #[test]
    fn labels_parse_and_report_line() {
        assert_eq!(parse_labels("0\n2\n\n1\n").unwrap(), vec![0, 2, 1]);
        assert_eq!(parse_labels("1.0\n").unwrap(), vec![1]);
        assert!(matches!(parse_labels("0\n-1\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn edge_list_round_trip() {
        let adj = CsrMatrix::from_dense(array![[0.5, 0.25, 0.0], [0.25, 0.125, 0.1], [0.0, 0.1, 0.9]].view(), 0.0);
        let text = format_edge_list(&adj);
        assert!(text.starts_with("i,j,weight\n"));
        assert_eq!(parse_edge_list(&text, 3).unwrap(), adj);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "second");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
