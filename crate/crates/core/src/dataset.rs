//! Dataset files.
//!
//! The binary form is `DSB1`, then n and d as little-endian u64, then the
//! n·d entries as little-endian f64 in row-major order. CSV import takes one
//! row per line, comma separated, with an optional non-numeric header line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::linalg::UnitRowDataset;

pub const MAGIC: &[u8; 4] = b"DSB1";

pub(crate) fn with_path(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub fn write_matrix(path: &Path, m: MatRef<'_, f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(with_path(path))?);
    w.write_all(MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<Mat<f64>> {
    let fmt = |msg: String| Error::Format(format!("{}: {msg}", path.display()));
    let mut bytes = Vec::new();
    File::open(path).map_err(with_path(path))?.read_to_end(&mut bytes)?;
    if bytes.len() < 20 || &bytes[..4] != MAGIC {
        return Err(fmt("not a DSB1 file".into()));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let (n, d) = (word(4), word(12));
    let len = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(20))
        .ok_or_else(|| fmt(format!("header {n}x{d} overflows")))?;
    if bytes.len() as u64 != len {
        return Err(fmt(format!("header says {n}x{d} but the file has {} bytes", bytes.len())));
    }
    let (n, d) = (n as usize, d as usize);
    let body = &bytes[20..];
    Ok(Mat::from_fn(n, d, |i, j| {
        let at = 8 * (i * d + j);
        f64::from_le_bytes(body[at..at + 8].try_into().expect("8 bytes"))
    }))
}

pub fn save_dataset(path: &Path, x: &UnitRowDataset) -> Result<()> {
    write_matrix(path, x.as_mat())
}

/// Loads a DSB1 file whose rows must already be unit vectors.
pub fn load_dataset(path: &Path) -> Result<UnitRowDataset> {
    UnitRowDataset::new(read_matrix(path)?)
}

pub fn read_csv(path: &Path) -> Result<Mat<f64>> {
    let reader = BufReader::new(File::open(path).map_err(with_path(path))?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(r) => {
                if let Some(first) = rows.first() {
                    if first.len() != r.len() {
                        return Err(Error::Format(format!(
                            "{} line {}: {} fields, expected {}",
                            path.display(),
                            lineno + 1,
                            r.len(),
                            first.len()
                        )));
                    }
                }
                rows.push(r);
            }
            Err(_) if lineno == 0 => continue,
            Err(e) => return Err(Error::Format(format!("{} line {}: {e}", path.display(), lineno + 1))),
        }
    }
    if rows.is_empty() {
        return Err(Error::Format(format!("{}: no data rows", path.display())));
    }
    let d = rows[0].len();
    Ok(Mat::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

/// Reads a dataset from DSB1 or, for a `.csv` extension, CSV. With
/// `normalize` the rows are scaled to unit length instead of checked.
pub fn load_any(path: &Path, normalize: bool) -> Result<UnitRowDataset> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let m = if is_csv { read_csv(path)? } else { read_matrix(path)? };
    if normalize {
        UnitRowDataset::normalize(m)
    } else {
        UnitRowDataset::new(m)
    }
}
