use std::io::Write;
use std::path::Path;

use super::NUM_COEFFS;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FEATURES_MAGIC: &[u8; 4] = b"HMFT";
pub const FEATURES_VERSION: u32 = 1;

/// 16 x T coefficients, stored row-major (coefficient-major).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f32>,
    cols: usize,
}

impl FeatureMatrix {
    pub fn from_row_major(data: Vec<f32>, cols: usize) -> Result<Self> {
        if data.len() != NUM_COEFFS * cols {
            return Err(Error::Shape(format!(
                "feature data has {} values, expected {NUM_COEFFS} x {cols}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("features contain non-finite values".into()));
        }
        Ok(FeatureMatrix { data, cols })
    }

    pub fn filled(cols: usize, value: f32) -> Self {
        FeatureMatrix {
            data: vec![value; NUM_COEFFS * cols],
            cols,
        }
    }

    /// Builds from frame columns of 16 values each.
    pub fn from_columns(columns: &[[f32; NUM_COEFFS]]) -> Result<Self> {
        let cols = columns.len();
        let mut data = vec![0f32; NUM_COEFFS * cols];
        for (t, col) in columns.iter().enumerate() {
            for (r, &v) in col.iter().enumerate() {
                data[r * cols + t] = v;
            }
        }
        Self::from_row_major(data, cols)
    }

    pub fn rows(&self) -> usize {
        NUM_COEFFS
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }

    pub fn column(&self, t: usize) -> [f32; NUM_COEFFS] {
        std::array::from_fn(|r| self.data[r * self.cols + t])
    }

    /// Columns `[start, start + len)`, taking `fill` columns where the range
    /// leaves the matrix on either side.
    pub fn window(&self, start: i64, len: usize, fill: &FeatureMatrix) -> FeatureMatrix {
        let mut data = vec![0f32; NUM_COEFFS * len];
        for j in 0..len {
            let t = start + j as i64;
            let col = if t >= 0 && (t as usize) < self.cols {
                self.column(t as usize)
            } else if fill.cols == 0 {
                [0.0; NUM_COEFFS]
            } else {
                fill.column(j % fill.cols)
            };
            for (r, v) in col.into_iter().enumerate() {
                data[r * len + j] = v;
            }
        }
        FeatureMatrix { data, cols: len }
    }

    /// Prepends `n` copies of `col`.
    pub fn left_pad(&self, n: usize, col: &[f32; NUM_COEFFS]) -> FeatureMatrix {
        let cols = self.cols + n;
        let mut data = vec![0f32; NUM_COEFFS * cols];
        for r in 0..NUM_COEFFS {
            let row = &mut data[r * cols..(r + 1) * cols];
            row[..n].fill(col[r]);
            row[n..].copy_from_slice(&self.data[r * self.cols..(r + 1) * self.cols]);
        }
        FeatureMatrix { data, cols }
    }

    /// `[1, 1, 16, T]` model input.
    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::from_vec(&[1, 1, NUM_COEFFS, self.cols], self.data.clone())
            .expect("feature matrix extent is consistent")
    }

    /// Stacks equal-width matrices into `[n, 1, 16, T]`.
    pub fn stack(items: &[&FeatureMatrix]) -> Result<Tensor<f32>> {
        let cols = items.first().map_or(0, |m| m.cols);
        if items.iter().any(|m| m.cols != cols) {
            return Err(Error::Shape("stacked feature matrices differ in width".into()));
        }
        let mut data = Vec::with_capacity(items.len() * NUM_COEFFS * cols);
        for m in items {
            data.extend_from_slice(&m.data);
        }
        Tensor::from_vec(&[items.len(), 1, NUM_COEFFS, cols], data)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.data.len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(FEATURES_MAGIC)?;
        w.write_all(&FEATURES_VERSION.to_le_bytes())?;
        w.write_all(&(NUM_COEFFS as u32).to_le_bytes())?;
        w.write_all(&(self.cols as u32).to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::Format("feature file shorter than its header".into()));
        }
        if &bytes[..4] != FEATURES_MAGIC {
            return Err(Error::Format("bad feature file magic".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != FEATURES_VERSION {
            return Err(Error::Format(format!("unsupported feature file version {version}")));
        }
        let rows = word(8) as usize;
        if rows != NUM_COEFFS {
            return Err(Error::Format(format!("feature file has {rows} rows, expected {NUM_COEFFS}")));
        }
        let cols = word(12) as usize;
        let body = &bytes[16..];
        if body.len() != 4 * NUM_COEFFS * cols {
            return Err(Error::Format(format!(
                "feature body is {} bytes, expected {} for {cols} columns",
                body.len(),
                4 * NUM_COEFFS * cols
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_row_major(data, cols).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureMatrix {
        FeatureMatrix::from_row_major((0..48).map(|i| i as f32).collect(), 3).unwrap()
    }

    #[test]
    fn round_trip_bytes() {
        let m = sample();
        let b = m.to_bytes();
        assert_eq!(&b[..4], b"HMFT");
        assert_eq!(b.len(), 16 + 48 * 4);
        assert_eq!(FeatureMatrix::from_bytes(&b).unwrap(), m);
    }

    #[test]
    fn corrupt_files_rejected() {
        let b = sample().to_bytes();
        assert!(matches!(FeatureMatrix::from_bytes(&b[..b.len() - 1]), Err(Error::Format(_))));
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(FeatureMatrix::from_bytes(&bad), Err(Error::Format(_))));
        let mut v2 = b.clone();
        v2[4] = 2;
        assert!(matches!(FeatureMatrix::from_bytes(&v2), Err(Error::Format(_))));
        let mut rows = b;
        rows[8] = 15;
        assert!(matches!(FeatureMatrix::from_bytes(&rows), Err(Error::Format(_))));
    }

    #[test]
    fn columns_and_windows() {
        let m = sample();
        assert_eq!(m.column(1)[0], 1.0);
        assert_eq!(m.column(1)[2], 7.0);
        let fill = FeatureMatrix::filled(1, -1.0);
        let w = m.window(-2, 6, &fill);
        assert_eq!(w.cols(), 6);
        assert_eq!(w.column(0), [-1.0; 16]);
        assert_eq!(w.column(2), m.column(0));
        assert_eq!(w.column(4), m.column(2));
        assert_eq!(w.column(5), [-1.0; 16]);
        let p = m.left_pad(2, &[5.0; 16]);
        assert_eq!(p.cols(), 5);
        assert_eq!(p.column(1), [5.0; 16]);
        assert_eq!(p.column(2), m.column(0));
        let cols: Vec<[f32; 16]> = (0..3).map(|t| m.column(t)).collect();
        assert_eq!(FeatureMatrix::from_columns(&cols).unwrap(), m);
    }

    #[test]
    fn tensor_layout_matches_rows() {
        let m = sample();
        let t = m.to_tensor();
        assert_eq!(t.dims(), &[1, 1, 16, 3]);
        assert_eq!(t.data()[2 * 3 + 1], m.get(2, 1));
    }
}
