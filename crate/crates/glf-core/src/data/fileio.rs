//! Numeric dataset files: delimited text and the "GLF1" raw binary format.
//!
//! GLF1 layout (little-endian): magic "GLF1" | u32 rows | u32 cols
//! | u32 has_labels | rows·cols f64 features | rows i64 labels (if flagged).
//! Write-then-read round-trips are bitwise identical.

use std::io::{Read, Write};
use std::path::Path;

use super::synth::Dataset;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const GLF1_MAGIC: &[u8; 4] = b"GLF1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    DelimitedText,
    RawF64,
}

/// Loads a dataset. Text rows hold comma/whitespace-separated decimals; if
/// every row's final field is integer-formatted it is taken as the label
/// column.
pub fn load_numeric_file(path: &Path, format: FileFormat) -> Result<Dataset> {
    match format {
        FileFormat::DelimitedText => load_delimited(path),
        FileFormat::RawF64 => load_raw(path),
    }
}

fn is_integer_token(tok: &str) -> bool {
    let t = tok.strip_prefix(['+', '-']).unwrap_or(tok);
    !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit())
}

fn load_delimited(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<String> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect();
        if fields.is_empty() {
            continue;
        }
        if let Some(first) = rows.first() {
            if fields.len() != first.len() {
                return Err(Error::Parse(format!(
                    "{}: line {} has {} fields, expected {}",
                    path.display(),
                    lineno + 1,
                    fields.len(),
                    first.len()
                )));
            }
        }
        rows.push(fields);
    }
    if rows.is_empty() {
        return Err(Error::Parse(format!("{}: no data rows", path.display())));
    }
    let width = rows[0].len();
    let has_labels = width >= 2 && rows.iter().all(|r| is_integer_token(&r[width - 1]));
    let feat_cols = if has_labels { width - 1 } else { width };
    let mut features = Vec::with_capacity(rows.len() * feat_cols);
    let mut labels = if has_labels { Some(Vec::with_capacity(rows.len())) } else { None };
    for (i, row) in rows.iter().enumerate() {
        for tok in &row[..feat_cols] {
            let v: f64 = tok.parse().map_err(|_| {
                Error::Parse(format!(
                    "{}: row {}: cannot parse '{}' as a number",
                    path.display(),
                    i + 1,
                    tok
                ))
            })?;
            features.push(v);
        }
        if let Some(ls) = labels.as_mut() {
            let l: i64 = row[width - 1].parse().map_err(|_| {
                Error::Parse(format!(
                    "{}: row {}: cannot parse label '{}'",
                    path.display(),
                    i + 1,
                    row[width - 1]
                ))
            })?;
            if l < 0 {
                return Err(Error::Parse(format!(
                    "{}: row {}: negative label {l}",
                    path.display(),
                    i + 1
                )));
            }
            ls.push(l as usize);
        }
    }
    let n_classes = labels
        .as_ref()
        .map(|ls| ls.iter().max().map_or(0, |m| m + 1))
        .unwrap_or(0);
    Ok(Dataset {
        features: Tensor::matrix(features, rows.len(), feat_cols)?,
        labels,
        n_classes,
    })
}

fn load_raw(path: &Path) -> Result<Dataset> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let (rows, cols, has_labels, rest) = parse_glf1_header(&bytes, path)?;
    let need = rows * cols * 8 + if has_labels { rows * 8 } else { 0 };
    if rest.len() != need {
        return Err(Error::Parse(format!(
            "{}: payload is {} bytes, header implies {}",
            path.display(),
            rest.len(),
            need
        )));
    }
    let mut features = Vec::with_capacity(rows * cols);
    for chunk in rest[..rows * cols * 8].chunks_exact(8) {
        features.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    let labels = if has_labels {
        let mut ls = Vec::with_capacity(rows);
        for chunk in rest[rows * cols * 8..].chunks_exact(8) {
            let l = i64::from_le_bytes(chunk.try_into().unwrap());
            if l < 0 {
                return Err(Error::Parse(format!(
                    "{}: negative label {l}",
                    path.display()
                )));
            }
            ls.push(l as usize);
        }
        Some(ls)
    } else {
        None
    };
    let n_classes = labels
        .as_ref()
        .map(|ls| ls.iter().max().map_or(0, |m| m + 1))
        .unwrap_or(0);
    Ok(Dataset {
        features: Tensor::matrix(features, rows, cols)?,
        labels,
        n_classes,
    })
}

fn parse_glf1_header<'a>(bytes: &'a [u8], path: &Path) -> Result<(usize, usize, bool, &'a [u8])> {
    if bytes.len() < 16 || &bytes[..4] != GLF1_MAGIC {
        return Err(Error::Parse(format!(
            "{}: not a GLF1 file (bad magic or truncated header)",
            path.display()
        )));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let has_labels = match u32::from_le_bytes(bytes[12..16].try_into().unwrap()) {
        0 => false,
        1 => true,
        v => {
            return Err(Error::Parse(format!(
                "{}: has_labels flag must be 0 or 1, got {v}",
                path.display()
            )))
        }
    };
    Ok((rows, cols, has_labels, &bytes[16..]))
}

/// Writes features (and labels, when present) in the GLF1 binary format.
pub fn save_raw_f64(path: &Path, features: &Tensor, labels: Option<&[usize]>) -> Result<()> {
    let shape = features.shape();
    if shape.len() != 2 {
        return Err(Error::InvalidShape {
            op: "save_raw_f64",
            shape: shape.to_vec(),
            reason: "expected rows x cols features",
        });
    }
    let (rows, cols) = (shape[0], shape[1]);
    if let Some(ls) = labels {
        if ls.len() != rows {
            return Err(Error::Dimension(format!(
                "{} labels for {rows} rows",
                ls.len()
            )));
        }
    }
    let mut buf = Vec::with_capacity(16 + rows * cols * 8);
    buf.extend_from_slice(GLF1_MAGIC);
    buf.extend_from_slice(&(rows as u32).to_le_bytes());
    buf.extend_from_slice(&(cols as u32).to_le_bytes());
    buf.extend_from_slice(&(labels.is_some() as u32).to_le_bytes());
    for &v in features.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(ls) = labels {
        for &l in ls {
            buf.extend_from_slice(&(l as i64).to_le_bytes());
        }
    }
    std::fs::File::create(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?
        .write_all(&buf)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Loads a bare GLF1 matrix (rows, cols, row-major data); used for linear
/// prior-encoder weights.
pub fn load_matrix_glf1(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f64>)> {
    let path = path.as_ref();
    let ds = load_raw(path)?;
    if ds.labels.is_some() {
        return Err(Error::Parse(format!(
            "{}: expected a bare matrix, found a label column",
            path.display()
        )));
    }
    let shape = ds.features.shape().to_vec();
    Ok((shape[0], shape[1], ds.features.data().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("glf_fileio_test");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn raw_roundtrip_bitwise() {
        let path = tmp("rt.glf1");
        let feats = Tensor::matrix(vec![1.5, -0.25, 1e-200, 42.0, 0.0, -7.5], 3, 2).unwrap();
        save_raw_f64(&path, &feats, Some(&[0, 1, 2])).unwrap();
        let ds = load_numeric_file(&path, FileFormat::RawF64).unwrap();
        let bits_a: Vec<u64> = feats.data().iter().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u64> = ds.features.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits_a, bits_b);
        assert_eq!(ds.labels, Some(vec![0, 1, 2]));
        // Saving again reproduces the identical file.
        let path2 = tmp("rt2.glf1");
        save_raw_f64(&path2, &ds.features, ds.labels.as_deref()).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn text_with_label_column() {
        let path = tmp("labels.txt");
        std::fs::write(&path, "1.0,2.0,0\n3.0,4.0,1\n").unwrap();
        let ds = load_numeric_file(&path, FileFormat::DelimitedText).unwrap();
        assert_eq!(ds.features.shape(), &[2, 2]);
        assert_eq!(ds.features.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ds.labels, Some(vec![0, 1]));
        assert_eq!(ds.n_classes, 2);
    }

    #[test]
    fn text_without_label_column() {
        let path = tmp("nolabels.txt");
        std::fs::write(&path, "1.0 2.5\n3.25 4.0\n").unwrap();
        let ds = load_numeric_file(&path, FileFormat::DelimitedText).unwrap();
        assert_eq!(ds.features.shape(), &[2, 2]);
        assert!(ds.labels.is_none());
    }

    #[test]
    fn malformed_row_names_the_line() {
        let path = tmp("ragged.txt");
        std::fs::write(&path, "1.0,2.0,0\n3.0,1\n").unwrap();
        let err = load_numeric_file(&path, FileFormat::DelimitedText).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
