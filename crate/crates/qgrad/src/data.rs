//! Dataset ingestion and synthesis.
//!
//! Real image sets arrive in the classic IDX binary layout (big-endian
//! magic + dimensions, unsigned-byte payload), optionally gzipped —
//! compression is detected from the `.gz` extension. Pixels are
//! normalized by exact division by 255. For CI and quick experiments,
//! [`synth_dataset`] builds small class-conditional blob images that a
//! one-hidden-layer network separates comfortably, and [`downscale`]
//! block-averages real images down to desk scale.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, WriteBytesExt};
use flate2::read::GzDecoder;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::stream::rng_for;
use crate::tensor::Tensor;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Provenance and source geometry of a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetMeta {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

/// Labeled image set; rows of `images` are flattened `rows x cols`
/// pictures with every pixel in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Flattened pixels per example.
    pub fn dim(&self) -> usize {
        self.images.row_len()
    }

    /// The first `n` examples as a new dataset (handy for quick runs).
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        let rows: Vec<Vec<f64>> = (0..n).map(|i| self.images.row(i).to_vec()).collect();
        Dataset {
            images: Tensor::from_rows(&rows).expect("equal-length rows"),
            labels: self.labels[..n].to_vec(),
            num_classes: self.num_classes,
            meta: self.meta.clone(),
        }
    }
}

/// Whole file contents, gunzipped when the extension says so.
fn read_file_bytes(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path)?;
    let mut bytes = Vec::new();
    if path.extension().is_some_and(|e| e == "gz") {
        GzDecoder::new(BufReader::new(file)).read_to_end(&mut bytes)?;
    } else {
        BufReader::new(file).read_to_end(&mut bytes)?;
    }
    Ok(bytes)
}

fn be_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_be_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

fn need(bytes: &[u8], needed: usize) -> Result<()> {
    if bytes.len() < needed {
        Err(Error::IdxTruncated {
            needed,
            found: bytes.len(),
        })
    } else {
        Ok(())
    }
}

/// Parsed 3-D image file: `(count, rows, cols, payload)`.
fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    // Magic first: a wrong file kind should say so even if it is also
    // shorter than an image header.
    need(bytes, 4)?;
    let magic = be_u32(bytes, 0);
    if magic != IMAGE_MAGIC {
        return Err(Error::IdxBadMagic {
            expected: IMAGE_MAGIC,
            found: magic,
        });
    }
    need(bytes, 16)?;
    let n = be_u32(bytes, 4) as usize;
    let rows = be_u32(bytes, 8) as usize;
    let cols = be_u32(bytes, 12) as usize;
    let payload = n
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::ShapeMismatch("idx dimensions overflow".into()))?;
    need(bytes, 16 + payload)?;
    if bytes.len() > 16 + payload {
        return Err(Error::IdxTrailingBytes {
            extra: bytes.len() - 16 - payload,
        });
    }
    Ok((n, rows, cols, &bytes[16..]))
}

/// Parsed 1-D label file: `(count, payload)`.
fn parse_idx_labels(bytes: &[u8]) -> Result<(usize, &[u8])> {
    need(bytes, 4)?;
    let magic = be_u32(bytes, 0);
    if magic != LABEL_MAGIC {
        return Err(Error::IdxBadMagic {
            expected: LABEL_MAGIC,
            found: magic,
        });
    }
    need(bytes, 8)?;
    let n = be_u32(bytes, 4) as usize;
    need(bytes, 8 + n)?;
    if bytes.len() > 8 + n {
        return Err(Error::IdxTrailingBytes {
            extra: bytes.len() - 8 - n,
        });
    }
    Ok((n, &bytes[8..]))
}

/// Load a paired IDX image/label file set.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let image_bytes = read_file_bytes(images_path)?;
    let label_bytes = read_file_bytes(labels_path)?;
    let (n_images, rows, cols, pixels) = parse_idx_images(&image_bytes)?;
    let (n_labels, raw_labels) = parse_idx_labels(&label_bytes)?;
    if n_images != n_labels {
        return Err(Error::IdxCountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }

    let data: Vec<f64> = pixels.iter().map(|&b| b as f64 / 255.0).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let name = images_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".to_string());
    Ok(Dataset {
        images: Tensor::new(vec![n_images, rows * cols], data)?,
        labels,
        num_classes,
        meta: DatasetMeta { name, rows, cols },
    })
}

/// Write a dataset back out as a plain (uncompressed) IDX pair.
/// Loading and re-writing a valid uncompressed fixture reproduces it
/// byte for byte; pixels are denormalized by rounding `p * 255`.
pub fn write_idx(dataset: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    if dataset.labels.iter().any(|&l| l > u8::MAX as usize) {
        return Err(Error::InvalidConfig(
            "idx labels are unsigned bytes; a label exceeds 255".into(),
        ));
    }
    let n = dataset.len();
    let (rows, cols) = (dataset.meta.rows, dataset.meta.cols);
    if rows * cols != dataset.dim() {
        return Err(Error::ShapeMismatch(format!(
            "meta says {rows}x{cols} but images have {} pixels",
            dataset.dim()
        )));
    }

    let mut w = BufWriter::new(File::create(images_path)?);
    w.write_u32::<BigEndian>(IMAGE_MAGIC)?;
    w.write_u32::<BigEndian>(n as u32)?;
    w.write_u32::<BigEndian>(rows as u32)?;
    w.write_u32::<BigEndian>(cols as u32)?;
    for &p in dataset.images.as_slice() {
        w.write_all(&[(p * 255.0).round() as u8])?;
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(labels_path)?);
    w.write_u32::<BigEndian>(LABEL_MAGIC)?;
    w.write_u32::<BigEndian>(n as u32)?;
    for &l in &dataset.labels {
        w.write_all(&[l as u8])?;
    }
    w.flush()?;
    Ok(())
}

/// Synthetic class-blob images: one Gaussian bump per class placed on a
/// circle, plus pixel noise, clipped to `[0, 1]`. Labels cycle through
/// the classes, so any prefix is near-balanced. Deterministic under the
/// seed.
pub fn synth_dataset(n: usize, side: usize, num_classes: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || side < 2 || num_classes == 0 {
        return Err(Error::InvalidConfig(format!(
            "synthetic dataset needs n >= 1, side >= 2, num_classes >= 1; got n {n}, side {side}, classes {num_classes}"
        )));
    }
    let d = side * side;
    let center = (side as f64 - 1.0) / 2.0;
    let radius = side as f64 / 4.0;
    let sigma = side as f64 / 6.0;

    let templates: Vec<Vec<f64>> = (0..num_classes)
        .map(|k| {
            let angle = std::f64::consts::TAU * k as f64 / num_classes as f64;
            let ci = center + radius * angle.sin();
            let cj = center + radius * angle.cos();
            (0..d)
                .map(|t| {
                    let (i, j) = ((t / side) as f64, (t % side) as f64);
                    let dist2 = (i - ci).powi(2) + (j - cj).powi(2);
                    0.9 * (-dist2 / (2.0 * sigma * sigma)).exp()
                })
                .collect()
        })
        .collect();

    let mut rng = rng_for(seed, 0);
    let noise = Normal::new(0.0, 0.06).expect("fixed std");
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for idx in 0..n {
        let k = idx % num_classes;
        labels.push(k);
        for &base in &templates[k] {
            data.push((base + noise.sample(&mut rng)).clamp(0.0, 1.0));
        }
    }
    Ok(Dataset {
        images: Tensor::new(vec![n, d], data)?,
        labels,
        num_classes,
        meta: DatasetMeta {
            name: format!("synthetic-{side}x{side}-c{num_classes}"),
            rows: side,
            cols: side,
        },
    })
}

/// Block-average pooling by an integer factor that must divide both
/// image dimensions. Means of `[0,1]` pixels stay in `[0,1]`.
pub fn downscale(dataset: &Dataset, factor: usize) -> Result<Dataset> {
    if factor == 0 {
        return Err(Error::InvalidConfig("downscale factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(dataset.clone());
    }
    let (rows, cols) = (dataset.meta.rows, dataset.meta.cols);
    if rows % factor != 0 || cols % factor != 0 {
        return Err(Error::InvalidConfig(format!(
            "downscale factor {factor} does not divide {rows}x{cols}"
        )));
    }
    let (new_rows, new_cols) = (rows / factor, cols / factor);
    let inv_area = 1.0 / (factor * factor) as f64;

    let n = dataset.len();
    let mut data = Vec::with_capacity(n * new_rows * new_cols);
    for i in 0..n {
        let src = dataset.images.row(i);
        for br in 0..new_rows {
            for bc in 0..new_cols {
                let mut acc = 0.0;
                for dr in 0..factor {
                    for dc in 0..factor {
                        acc += src[(br * factor + dr) * cols + bc * factor + dc];
                    }
                }
                data.push(acc * inv_area);
            }
        }
    }
    Ok(Dataset {
        images: Tensor::new(vec![n, new_rows * new_cols], data)?,
        labels: dataset.labels.clone(),
        num_classes: dataset.num_classes,
        meta: DatasetMeta {
            name: format!("{}-x{}", dataset.meta.name, factor),
            rows: new_rows,
            cols: new_cols,
        },
    })
}
