//! Artifact files under `{out}/{run_id}/`.
//!
//! Time series go to CSV, reports to pretty JSON and full trajectories to raw
//! little-endian `f64` dumps in column-major order (one column per time
//! node, `N` rows).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone)]
pub struct ArtifactDir {
    root: PathBuf,
}

impl ArtifactDir {
    /// Creates `{out}/{run_id}` if needed.
    pub fn create(out: &Path, run_id: &str) -> Result<Self> {
        let root = out.join(run_id);
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, artifact: &str, ext: &str) -> PathBuf {
        self.root.join(format!("{artifact}.{ext}"))
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, artifact: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(artifact, "json");
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(path)
    }

    /// Header plus one row per record; floats use the shortest round-trip
    /// representation.
    pub fn write_csv(&self, artifact: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<PathBuf> {
        let path = self.path(artifact, "csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.iter().map(|x| x.to_string()))?;
        }
        w.flush()?;
        Ok(path)
    }

    pub fn write_raw(&self, artifact: &str, series: &[DVector<f64>]) -> Result<PathBuf> {
        let path = self.path(artifact, "f64");
        let mut w = BufWriter::new(File::create(&path)?);
        for v in series {
            for x in v.iter() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(path)
    }
}

/// Reads a raw dump back as `n_rows`-long columns.
pub fn read_raw(path: &Path, n_rows: usize) -> Result<Vec<DVector<f64>>> {
    let bytes = fs::read(path)?;
    if n_rows == 0 || bytes.len() % (8 * n_rows) != 0 {
        return Err(crate::Error::invalid(format!(
            "{}: {} bytes is not a whole number of {n_rows}-row columns",
            path.display(),
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(values
        .chunks_exact(n_rows)
        .map(DVector::from_column_slice)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let out = ArtifactDir::create(dir.path(), "run").unwrap();
        let series = vec![DVector::from_vec(vec![1.0, -2.5, 1e-300]), DVector::from_vec(vec![0.1, 0.2, 0.3])];
        let p = out.write_raw("phi", &series).unwrap();
        assert_eq!(p, dir.path().join("run/phi.f64"));
        assert_eq!(read_raw(&p, 3).unwrap(), series);
        assert!(read_raw(&p, 4).is_err());
    }

    #[test]
    fn csv_shortest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let out = ArtifactDir::create(dir.path(), "run").unwrap();
        let x = 0.1 + 0.2;
        let p = out.write_csv("h", &["k", "x"], &[vec![0.0, x]]).unwrap();
        let text = fs::read_to_string(p).unwrap();
        let last: f64 = text.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(last.to_bits(), x.to_bits());
    }
}
