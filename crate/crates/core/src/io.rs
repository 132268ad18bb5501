//! Dataset manifests, CSV matrices and run artifacts.
//!
//! Every file written here goes through a temporary file in the target
//! directory followed by a rename, so readers never observe a partial
//! artifact. Reals are written with 12 significant digits.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::MultiViewDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::solver::SolverTrace;

/// JSON description of a dataset on disk. Relative paths are resolved
/// against the directory holding the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub views: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    /// Single-character field separator, `,` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delimiter: Option<char>,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let mut manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::Manifest {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        if manifest.views.is_empty() {
            return Err(Error::Manifest {
                path: path.to_path_buf(),
                message: "at least one view is required".into(),
            });
        }
        if let Some(d) = manifest.delimiter {
            if !d.is_ascii() {
                return Err(Error::Manifest {
                    path: path.to_path_buf(),
                    message: format!("delimiter {d:?} is not a single ASCII character"),
                });
            }
        }
        let base = path.parent().unwrap_or(Path::new("."));
        for v in &mut manifest.views {
            *v = base.join(&*v);
        }
        if let Some(l) = &mut manifest.labels {
            *l = base.join(&*l);
        }
        Ok(manifest)
    }

    fn delimiter_byte(&self) -> u8 {
        self.delimiter.map_or(b',', |c| c as u8)
    }
}

/// Loads every view (and labels, if listed) named by a manifest.
pub fn load_dataset<T: Scalar>(manifest_path: &Path) -> Result<MultiViewDataset<T>> {
    let manifest = DatasetManifest::read(manifest_path)?;
    let delim = manifest.delimiter_byte();
    for p in manifest.views.iter().chain(&manifest.labels) {
        if !p.is_file() {
            return Err(Error::MissingFile(p.clone()));
        }
    }
    let mut views: Vec<Array2<T>> = Vec::with_capacity(manifest.views.len());
    for (v, path) in manifest.views.iter().enumerate() {
        let x = read_matrix_with(path, delim)?;
        if v > 0 && x.nrows() != views[0].nrows() {
            return Err(Error::RowCountMismatch {
                reference: manifest.views[0].clone(),
                expected: views[0].nrows(),
                file: path.clone(),
                found: x.nrows(),
            });
        }
        views.push(x);
    }
    let labels = match &manifest.labels {
        Some(path) => {
            let l = read_labels(path)?;
            if l.len() != views[0].nrows() {
                return Err(Error::RowCountMismatch {
                    reference: manifest.views[0].clone(),
                    expected: views[0].nrows(),
                    file: path.clone(),
                    found: l.len(),
                });
            }
            Some(l)
        }
        None => None,
    };
    MultiViewDataset::new(manifest.name, views, labels)
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })
}

fn csv_reader(path: &Path, delimiter: u8) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::NonNumeric {
            file: path.to_path_buf(),
            line,
            column: 0,
            value: format!("{other:?}"),
        },
    }
}

/// Headerless, comma-separated dense matrix, one row per line.
pub fn read_matrix<T: Scalar>(path: &Path) -> Result<Array2<T>> {
    read_matrix_with(path, b',')
}

pub fn read_matrix_with<T: Scalar>(path: &Path, delimiter: u8) -> Result<Array2<T>> {
    let mut reader = csv_reader(path, delimiter)?;
    let mut data: Vec<T> = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(rows + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let expected = *cols.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::RaggedRow {
                file: path.to_path_buf(),
                line,
                expected,
                found: record.len(),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                file: path.to_path_buf(),
                line,
                column: j + 1,
                value: cell.to_string(),
            })?;
            data.push(T::lit(v));
        }
        rows += 1;
    }
    let cols = match cols {
        Some(c) if rows > 0 => c,
        _ => return Err(Error::EmptyFile(path.to_path_buf())),
    };
    Ok(Array2::from_shape_vec((rows, cols), data).expect("row-major buffer"))
}

/// One nonnegative integer label per line.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let mut reader = csv_reader(path, b',')?;
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record
            .position()
            .map_or(labels.len() + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 1 {
            return Err(Error::RaggedRow {
                file: path.to_path_buf(),
                line,
                expected: 1,
                found: record.len(),
            });
        }
        let cell = &record[0];
        let label = cell.parse::<usize>().map_err(|_| Error::NonNumeric {
            file: path.to_path_buf(),
            line,
            column: 1,
            value: cell.to_string(),
        })?;
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    Ok(labels)
}

/// Formats a real with 12 significant digits.
pub fn fmt_real<T: Scalar>(x: T) -> String {
    format!("{:.11e}", x.as_f64())
}

/// Writes a file through a temporary sibling and an atomic rename.
pub fn write_atomic(
    path: &Path,
    fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_matrix<T: Scalar>(path: &Path, x: ArrayView2<T>) -> Result<()> {
    write_atomic(path, |w| {
        for row in x.rows() {
            let line: Vec<String> = row.iter().map(|&v| fmt_real(v)).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    })
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    write_atomic(path, |w| {
        for l in labels {
            writeln!(w, "{l}")?;
        }
        Ok(())
    })
}

/// Nonzero entries of a square matrix as `i,j,value` triplets.
pub fn write_sparse<T: Scalar>(path: &Path, s: ArrayView2<T>) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "i,j,value")?;
        for (i, row) in s.rows().into_iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != T::zero() {
                    writeln!(w, "{i},{j},{}", fmt_real(v))?;
                }
            }
        }
        Ok(())
    })
}

pub fn read_sparse<T: Scalar>(path: &Path, n: usize) -> Result<Array2<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut s = Array2::zeros((n, n));
    for record in reader.deserialize::<(usize, usize, f64)>() {
        let (i, j, v) = record.map_err(|e| csv_error(path, e))?;
        if i >= n || j >= n {
            return Err(Error::Dimension(format!(
                "{}: entry ({i}, {j}) outside {n}x{n}",
                path.display()
            )));
        }
        s[[i, j]] = T::lit(v);
    }
    Ok(s)
}

pub fn write_weights<T: Scalar>(path: &Path, w: &[T]) -> Result<()> {
    write_atomic(path, |out| {
        writeln!(out, "view,weight")?;
        for (v, &x) in w.iter().enumerate() {
            writeln!(out, "{v},{}", fmt_real(x))?;
        }
        Ok(())
    })
}

pub fn write_trace<T: Scalar>(path: &Path, trace: &SolverTrace<T>) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "iter,objective,fusion_residual,eig_sum,components,beta")?;
        for r in &trace.records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.iter,
                fmt_real(r.objective),
                fmt_real(r.fusion_residual),
                fmt_real(r.eig_sum),
                r.components,
                fmt_real(r.beta)
            )?;
        }
        Ok(())
    })
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
        writeln!(w)
    })
}

pub fn read_json<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<S> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
