//! Column-per-user feature matrices shared by every embedding level.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! magic     8 bytes  "IDLFEAT1"
//! level     u8
//! d, n      u64, u64
//! manifest  u32 count, then per entry: tag u8, start u64, end u64
//! data      d*n f64, row-major
//! ```

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::bytes::Reader;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"IDLFEAT1";

/// Which embedding produced a block of feature rows. The derive order is the
/// fixed stacking order used by fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    Char,
    Word,
    Topic,
    Structure,
    Fused,
}

impl Level {
    pub const ATTRIBUTES: [Level; 3] = [Level::Char, Level::Word, Level::Topic];
    pub const ALL: [Level; 4] = [Level::Char, Level::Word, Level::Topic, Level::Structure];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Char => "char",
            Level::Word => "word",
            Level::Topic => "topic",
            Level::Structure => "structure",
            Level::Fused => "fused",
        }
    }

    fn tag(self) -> u8 {
        match self {
            Level::Char => 0,
            Level::Word => 1,
            Level::Topic => 2,
            Level::Structure => 3,
            Level::Fused => 4,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => Level::Char,
            1 => Level::Word,
            2 => Level::Topic,
            3 => Level::Structure,
            4 => Level::Fused,
            t => return Err(Error::Format(format!("unknown level tag {t}"))),
        })
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "char" => Level::Char,
            "word" => Level::Word,
            "topic" => Level::Topic,
            "structure" => Level::Structure,
            "fused" => Level::Fused,
            other => return Err(Error::InvalidConfig(format!("unknown level '{other}'"))),
        })
    }
}

/// A d×n real matrix, one column per user, with a manifest recording which
/// rows came from which level.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: DMatrix<f64>,
    level: Level,
    manifest: Vec<(Level, Range<usize>)>,
}

impl FeatureMatrix {
    pub fn new(level: Level, data: DMatrix<f64>) -> Self {
        let manifest = vec![(level, 0..data.nrows())];
        FeatureMatrix {
            data,
            level,
            manifest,
        }
    }

    pub fn with_manifest(
        level: Level,
        data: DMatrix<f64>,
        manifest: Vec<(Level, Range<usize>)>,
    ) -> Result<Self> {
        let mut next = 0;
        for (tag, range) in &manifest {
            if range.start != next || range.end < range.start {
                return Err(Error::Format(format!(
                    "manifest range {range:?} for {tag} is not contiguous"
                )));
            }
            next = range.end;
        }
        if next != data.nrows() {
            return Err(Error::DimensionMismatch {
                what: "manifest rows",
                expected: data.nrows(),
                actual: next,
            });
        }
        Ok(FeatureMatrix {
            data,
            level,
            manifest,
        })
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn manifest(&self) -> &[(Level, Range<usize>)] {
        &self.manifest
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    /// Replaces the values while keeping level and manifest.
    pub fn map_data(&self, data: DMatrix<f64>) -> Self {
        assert_eq!(data.nrows(), self.data.nrows());
        FeatureMatrix {
            data,
            level: self.level,
            manifest: self.manifest.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.data.ncols()
    }

    pub fn column(&self, i: usize) -> DVector<f64> {
        self.data.column(i).into_owned()
    }

    /// Gathers the given columns, in order, into a new matrix.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let data = self.data.select_columns(cols);
        FeatureMatrix {
            data,
            level: self.level,
            manifest: self.manifest.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (d, n) = self.data.shape();
        let mut out = Vec::with_capacity(64 + 8 * d * n);
        out.extend_from_slice(MAGIC);
        out.push(self.level.tag());
        out.extend_from_slice(&(d as u64).to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&(self.manifest.len() as u32).to_le_bytes());
        for (tag, range) in &self.manifest {
            out.push(tag.tag());
            out.extend_from_slice(&(range.start as u64).to_le_bytes());
            out.extend_from_slice(&(range.end as u64).to_le_bytes());
        }
        for r in 0..d {
            for c in 0..n {
                out.extend_from_slice(&self.data[(r, c)].to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader::new(bytes);
        if rd.take(8)? != MAGIC {
            return Err(Error::Format("not a feature matrix file".into()));
        }
        let level = Level::from_tag(rd.u8()?)?;
        let d = rd.usize()?;
        let n = rd.usize()?;
        let entries = rd.u32()? as usize;
        let mut manifest = Vec::with_capacity(entries);
        for _ in 0..entries {
            let tag = Level::from_tag(rd.u8()?)?;
            let start = rd.usize()?;
            let end = rd.usize()?;
            manifest.push((tag, start..end));
        }
        let values = rd.f64_vec(d.checked_mul(n).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        rd.finish()?;
        let data = DMatrix::from_row_slice(d, n, &values);
        FeatureMatrix::with_manifest(level, data, manifest)
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// CSV export for inspection: a header row naming the level of each
    /// feature row, then one line per feature row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "level,{}", (0..self.n_users()).map(|i| format!("u{i}")).collect::<Vec<_>>().join(",")).map_err(io)?;
        for (tag, range) in &self.manifest {
            for r in range.clone() {
                write!(w, "{tag}").map_err(io)?;
                for c in 0..self.n_users() {
                    write!(w, ",{}", self.data[(r, c)]).map_err(io)?;
                }
                writeln!(w).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_roundtrip_keeps_manifest() {
        let data = DMatrix::from_fn(5, 3, |r, c| (r * 3 + c) as f64 * 0.5 - 1.0);
        let fm = FeatureMatrix::with_manifest(
            Level::Fused,
            data,
            vec![(Level::Char, 0..2), (Level::Structure, 2..5)],
        )
        .unwrap();
        let back = FeatureMatrix::from_bytes(&fm.to_bytes()).unwrap();
        assert_eq!(fm, back);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let fm = FeatureMatrix::new(Level::Char, DMatrix::zeros(2, 2));
        let bytes = fm.to_bytes();
        assert!(FeatureMatrix::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(FeatureMatrix::from_bytes(b"garbage!").is_err());
    }

    #[test]
    fn manifest_must_cover_rows() {
        let r = FeatureMatrix::with_manifest(Level::Fused, DMatrix::zeros(3, 1), vec![(Level::Char, 0..2)]);
        assert!(r.is_err());
    }

    #[test]
    fn csv_export_has_one_line_per_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let fm = FeatureMatrix::new(Level::Word, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        fm.write_csv(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "level,u0,u1\nword,1,2\nword,3,4\n");
    }
}
