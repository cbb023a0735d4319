//! Columnar datasets and the `TFD1` / CSV file formats.
//!
//! `TFD1` layout, all little-endian:
//!
//! ```text
//! "TFD1"
//! u64 n_rows, u64 n_features
//! u8 task (0 = regression, 1 = classification), u32 n_classes (0 for regression)
//! n_features x (u8 kind (0 = numeric, 1 = categorical), u32 cardinality)
//! n_features x n_rows f64 cells, column after column, missing = quiet NaN
//! n_rows f64 target
//! n_rows u8 split (0 = train, 1 = test)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TFD_MAGIC: &[u8; 4] = b"TFD1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Numeric,
    Categorical { cardinality: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    Regression,
    Classification { n_classes: usize },
}

impl TaskKind {
    pub fn n_classes(&self) -> Option<usize> {
        match self {
            TaskKind::Classification { n_classes } => Some(*n_classes),
            TaskKind::Regression => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

/// A supervised table stored column by column. Missing cells are NaN.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub columns: Vec<Vec<f64>>,
    pub col_kinds: Vec<ColumnKind>,
    /// Class index (as a float) or real-valued target.
    pub y: Vec<f64>,
    pub split: Vec<Split>,
    pub task: TaskKind,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        fn bits(v: &[f64]) -> Vec<u64> {
            v.iter().map(|x| x.to_bits()).collect()
        }
        self.columns.len() == other.columns.len()
            && self
                .columns
                .iter()
                .zip(&other.columns)
                .all(|(a, b)| bits(a) == bits(b))
            && self.col_kinds == other.col_kinds
            && bits(&self.y) == bits(&other.y)
            && self.split == other.split
            && self.task == other.task
    }
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn cell(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        !self.columns[col][row].is_finite()
    }

    /// Row-major missingness mask, true exactly where a cell is non-finite.
    pub fn nan_mask(&self) -> Vec<Vec<bool>> {
        (0..self.n_rows())
            .map(|r| (0..self.n_features()).map(|c| self.is_missing(r, c)).collect())
            .collect()
    }

    pub fn train_indices(&self) -> Vec<usize> {
        self.indices_of(Split::Train)
    }

    pub fn test_indices(&self) -> Vec<usize> {
        self.indices_of(Split::Test)
    }

    fn indices_of(&self, s: Split) -> Vec<usize> {
        self.split
            .iter()
            .enumerate()
            .filter(|(_, &x)| x == s)
            .map(|(i, _)| i)
            .collect()
    }

    /// Check the structural invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_rows();
        if self.split.len() != n {
            return Err(Error::Format("split length differs from target length".into()));
        }
        if self.col_kinds.len() != self.columns.len() {
            return Err(Error::Format("one kind record per column required".into()));
        }
        for (c, (col, kind)) in self.columns.iter().zip(&self.col_kinds).enumerate() {
            if col.len() != n {
                return Err(Error::Format(format!("column {c} has {} rows, expected {n}", col.len())));
            }
            if let ColumnKind::Categorical { cardinality } = kind {
                let ok = col.iter().filter(|v| v.is_finite()).all(|&v| {
                    v >= 0.0 && v.fract() == 0.0 && (v as u64) < *cardinality as u64
                });
                if !ok {
                    return Err(Error::Format(format!(
                        "categorical column {c} holds values outside 0..{cardinality}"
                    )));
                }
            }
        }
        if let TaskKind::Classification { n_classes } = self.task {
            let ok = self
                .y
                .iter()
                .all(|&v| v >= 0.0 && v.fract() == 0.0 && (v as usize) < n_classes);
            if !ok {
                return Err(Error::Format(format!("class labels outside 0..{n_classes}")));
            }
        } else if self.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("regression targets must be finite".into()));
        }
        Ok(())
    }

    pub fn write_tfd<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(TFD_MAGIC)?;
        w.write_all(&(self.n_rows() as u64).to_le_bytes())?;
        w.write_all(&(self.n_features() as u64).to_le_bytes())?;
        let (tag, k) = match self.task {
            TaskKind::Regression => (0u8, 0u32),
            TaskKind::Classification { n_classes } => (1u8, n_classes as u32),
        };
        w.write_all(&[tag])?;
        w.write_all(&k.to_le_bytes())?;
        for kind in &self.col_kinds {
            let (tag, card) = match kind {
                ColumnKind::Numeric => (0u8, 0u32),
                ColumnKind::Categorical { cardinality } => (1u8, *cardinality),
            };
            w.write_all(&[tag])?;
            w.write_all(&card.to_le_bytes())?;
        }
        for col in &self.columns {
            for &v in col {
                let v = if v.is_finite() { v } else { f64::NAN };
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for &v in &self.y {
            w.write_all(&v.to_le_bytes())?;
        }
        let split: Vec<u8> = self
            .split
            .iter()
            .map(|s| match s {
                Split::Train => 0,
                Split::Test => 1,
            })
            .collect();
        w.write_all(&split)?;
        Ok(())
    }

    pub fn to_tfd_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_tfd(&mut buf).expect("writing to memory");
        buf
    }

    pub fn read_tfd<R: Read>(mut r: R) -> Result<Dataset> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != TFD_MAGIC {
            return Err(Error::Format("not a TFD1 file".into()));
        }
        let n_rows = read_u64(&mut r)? as usize;
        let n_features = read_u64(&mut r)? as usize;
        let task = match (read_u8(&mut r)?, read_u32(&mut r)?) {
            (0, _) => TaskKind::Regression,
            (1, k) => TaskKind::Classification { n_classes: k as usize },
            (t, _) => return Err(Error::Format(format!("unknown task tag {t}"))),
        };
        let mut col_kinds = Vec::with_capacity(n_features);
        for _ in 0..n_features {
            col_kinds.push(match (read_u8(&mut r)?, read_u32(&mut r)?) {
                (0, _) => ColumnKind::Numeric,
                (1, c) => ColumnKind::Categorical { cardinality: c },
                (t, _) => return Err(Error::Format(format!("unknown column tag {t}"))),
            });
        }
        let mut columns = Vec::with_capacity(n_features);
        for _ in 0..n_features {
            columns.push(read_f64s(&mut r, n_rows)?);
        }
        let y = read_f64s(&mut r, n_rows)?;
        let mut split_bytes = vec![0u8; n_rows];
        r.read_exact(&mut split_bytes)?;
        let split = split_bytes
            .iter()
            .map(|&b| match b {
                0 => Ok(Split::Train),
                1 => Ok(Split::Test),
                _ => Err(Error::Format(format!("unknown split byte {b}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let ds = Dataset { columns, col_kinds, y, split, task };
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_tfd(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        let f = std::fs::File::open(path)?;
        Dataset::read_tfd(std::io::BufReader::new(f))
    }

    /// CSV with a header row (`f0..`, `target`, `split`) and literal `NaN`
    /// for missing cells.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.n_features()).map(|c| format!("f{c}")).collect();
        header.push("target".into());
        header.push("split".into());
        out.write_record(&header)?;
        for r in 0..self.n_rows() {
            let mut rec: Vec<String> = (0..self.n_features())
                .map(|c| {
                    let v = self.cell(r, c);
                    if v.is_finite() { v.to_string() } else { "NaN".into() }
                })
                .collect();
            rec.push(self.y[r].to_string());
            rec.push(match self.split[r] {
                Split::Train => "train".into(),
                Split::Test => "test".into(),
            });
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        Dataset {
            columns: vec![vec![1.0, f64::NAN, 3.5], vec![0.0, 2.0, 1.0]],
            col_kinds: vec![ColumnKind::Numeric, ColumnKind::Categorical { cardinality: 3 }],
            y: vec![1.0, 0.0, 1.0],
            split: vec![Split::Train, Split::Train, Split::Test],
            task: TaskKind::Classification { n_classes: 2 },
        }
    }

    #[test]
    fn tfd_round_trip() {
        let ds = sample();
        let bytes = ds.to_tfd_bytes();
        assert_eq!(&bytes[..4], b"TFD1");
        let back = Dataset::read_tfd(bytes.as_slice()).unwrap();
        assert_eq!(ds, back);
        assert!(back.is_missing(1, 0));
        assert_eq!(back.nan_mask()[1], vec![true, false]);
    }

    #[test]
    fn bad_magic_and_labels() {
        assert!(Dataset::read_tfd(&b"XXXX"[..]).is_err());
        let mut ds = sample();
        ds.y[0] = 5.0;
        assert!(ds.validate().is_err());
    }

    #[test]
    fn csv_uses_literal_nan() {
        let mut buf = Vec::new();
        sample().write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "f0,f1,target,split");
        assert_eq!(lines[2], "NaN,2,0,train");
    }
}
