//! Batches: synthetic generators and the IDX image format.

use std::fs;
use std::path::Path;

use gradinv_core::rng::{SeededRng, Stream};
use gradinv_core::Batch;
use ndarray::{Array1, Array2};

use crate::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// `xᵢ = eᵢ`.
    Basis,
    /// Independent uniformly random unit vectors.
    RandomUnit,
}

/// Alternating labels `+1, −1, +1, …`.
pub fn alternating_labels(b: usize) -> Array1<f64> {
    Array1::from_iter((0..b).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }))
}

pub fn gen_synthetic(d: usize, b: usize, kind: SyntheticKind, min_sv: f64, seed: u64) -> Result<Batch> {
    if b == 0 || b > d {
        return Err(HarnessError::Config(format!("batch size {b} must lie in 1..={d}")));
    }
    let y = alternating_labels(b);
    match kind {
        SyntheticKind::Basis => {
            let mut x = Array2::zeros((d, b));
            for i in 0..b {
                x[[i, i]] = 1.0;
            }
            Ok(Batch::classification(x, y)?)
        }
        SyntheticKind::RandomUnit => {
            let mut rng = SeededRng::new(seed, Stream::Data);
            for _ in 0..100 {
                let mut x = rng.normal_matrix(d, b);
                for mut col in x.columns_mut() {
                    let n = col.dot(&col).sqrt();
                    col /= n;
                }
                match Batch::classification(x, y.clone()) {
                    Ok(batch) if batch.pi_min() >= min_sv => return Ok(batch),
                    Ok(_) | Err(gradinv_core::Error::Degenerate(_)) => continue,
                    Err(e) => return Err(e.into()),
                }
            }
            Err(HarnessError::Data(format!(
                "no batch with smallest singular value >= {min_sv} in 100 draws"
            )))
        }
    }
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| HarnessError::Format("truncated IDX header".into()))
}

/// Raw images of an IDX3 file: `(count, rows, cols, pixels)`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let bytes = fs::read(path)?;
    let magic = read_u32(&bytes, 0)?;
    if magic != 0x0000_0803 {
        return Err(HarnessError::Format(format!(
            "{}: image magic {magic:#010x}, expected 0x00000803",
            path.display()
        )));
    }
    let n = read_u32(&bytes, 4)? as usize;
    let rows = read_u32(&bytes, 8)? as usize;
    let cols = read_u32(&bytes, 12)? as usize;
    let body = &bytes[16..];
    if body.len() != n * rows * cols {
        return Err(HarnessError::Format(format!(
            "{}: {} pixel bytes for {n} images of {rows}x{cols}",
            path.display(),
            body.len()
        )));
    }
    Ok((n, rows, cols, body.to_vec()))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path)?;
    let magic = read_u32(&bytes, 0)?;
    if magic != 0x0000_0801 {
        return Err(HarnessError::Format(format!(
            "{}: label magic {magic:#010x}, expected 0x00000801",
            path.display()
        )));
    }
    let n = read_u32(&bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(HarnessError::Format(format!(
            "{}: {} label bytes for {n} labels",
            path.display(),
            body.len()
        )));
    }
    Ok(body.to_vec())
}

/// Unit-norm images of two classes, one per column, with their `±1` labels
/// (`classes.0 ↦ +1`).
#[derive(Debug, Clone)]
pub struct ImagePool {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
}

impl ImagePool {
    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Seeded pick of `b` images with classes alternating `+1, −1, …`,
    /// returned as a batch together with their pool indices.
    pub fn sample(&self, b: usize, seed: u64) -> Result<(Batch, Vec<usize>)> {
        let by_label = |label: f64| -> Vec<usize> { (0..self.len()).filter(|&i| self.y[i] == label).collect() };
        let pos = by_label(1.0);
        let neg = by_label(-1.0);
        let mut rng = SeededRng::new(seed, Stream::Data);
        let mut chosen: Vec<usize> = Vec::with_capacity(b);
        for k in 0..b {
            let src = if k % 2 == 0 { &pos } else { &neg };
            let free: Vec<usize> = src.iter().copied().filter(|i| !chosen.contains(i)).collect();
            if free.is_empty() {
                return Err(HarnessError::Data("not enough images of each class".into()));
            }
            chosen.push(free[(rng.uniform() * free.len() as f64) as usize]);
        }
        let mut x = Array2::zeros((self.x.nrows(), b));
        for (k, &i) in chosen.iter().enumerate() {
            x.column_mut(k).assign(&self.x.column(i));
        }
        let y = Array1::from_iter(chosen.iter().map(|&i| self.y[i]));
        Ok((Batch::classification(x, y)?, chosen))
    }
}

/// The first `count` images whose label is one of `classes`, scaled by
/// 1/255, flattened row-major and normalized to unit length.
pub fn load_idx_pool(images: &Path, labels: &Path, classes: (u8, u8), count: usize) -> Result<ImagePool> {
    let (n, rows, cols, pixels) = read_idx_images(images)?;
    let lab = read_idx_labels(labels)?;
    if lab.len() != n {
        return Err(HarnessError::Format(format!("{n} images but {} labels", lab.len())));
    }
    let dim = rows * cols;
    let picked: Vec<usize> = (0..n)
        .filter(|&i| lab[i] == classes.0 || lab[i] == classes.1)
        .take(count)
        .collect();
    if picked.len() < count {
        return Err(HarnessError::Data(format!(
            "only {} images of classes {}/{} (wanted {count})",
            picked.len(),
            classes.0,
            classes.1
        )));
    }
    let mut x = Array2::zeros((dim, count));
    let mut y = Array1::zeros(count);
    for (k, &i) in picked.iter().enumerate() {
        let img = &pixels[i * dim..(i + 1) * dim];
        let v = Array1::from_iter(img.iter().map(|&p| p as f64 / 255.0));
        let norm = v.dot(&v).sqrt();
        if norm == 0.0 {
            return Err(HarnessError::Data(format!("image {i} is blank and cannot be normalized")));
        }
        x.column_mut(k).assign(&(v / norm));
        y[k] = if lab[i] == classes.0 { 1.0 } else { -1.0 };
    }
    Ok(ImagePool { x, y })
}

/// [`load_idx_pool`] as a batch; the images must be linearly independent.
pub fn load_idx(images: &Path, labels: &Path, classes: (u8, u8), count: usize) -> Result<Batch> {
    let pool = load_idx_pool(images, labels, classes, count)?;
    Ok(Batch::classification(pool.x, pool.y)?)
}
