//! IDX image and label files as used by MNIST: a big-endian magic
//! (`0x00000803` images, `0x00000801` labels), one big-endian `u32` per
//! dimension, then raw unsigned bytes.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Labeled greyscale images, pixels row-major per image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub rows: usize,
    pub cols: usize,
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        if pixels.len() != rows * cols * labels.len() {
            return Err(Error::Shape(format!(
                "{} labels need {} pixels of {rows}x{cols}, got {}",
                labels.len(),
                rows * cols * labels.len(),
                pixels.len()
            )));
        }
        Ok(Dataset {
            rows,
            cols,
            pixels,
            labels,
        })
    }

    /// Reads `t10k-images-idx3-ubyte` and `t10k-labels-idx1-ubyte` from `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        Self::load(dir.join(TEST_IMAGES), dir.join(TEST_LABELS))
    }

    pub fn load(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Self> {
        let (images, labels) = (images.as_ref(), labels.as_ref());
        let (dims, pixels) = parse_idx(&read(images)?, IMAGES_MAGIC, &images.display().to_string())?;
        let (ldims, labels_raw) = parse_idx(&read(labels)?, LABELS_MAGIC, &labels.display().to_string())?;
        if dims[0] != ldims[0] {
            return Err(Error::Shape(format!(
                "{} images but {} labels",
                dims[0], ldims[0]
            )));
        }
        Dataset::new(dims[1], dims[2], pixels, labels_raw)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, index: usize) -> &[u8] {
        let size = self.rows * self.cols;
        &self.pixels[index * size..(index + 1) * size]
    }

    pub fn label(&self, index: usize) -> u8 {
        self.labels[index]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Encodes the images and labels as IDX files.
    pub fn to_idx(&self) -> (Vec<u8>, Vec<u8>) {
        let n = self.len() as u32;
        let mut images = header(IMAGES_MAGIC, &[n, self.rows as u32, self.cols as u32]);
        images.extend_from_slice(&self.pixels);
        let mut labels = header(LABELS_MAGIC, &[n]);
        labels.extend_from_slice(&self.labels);
        (images, labels)
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(PathBuf::from(path), e))
}

fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
    std::iter::once(magic)
        .chain(dims.iter().copied())
        .flat_map(u32::to_be_bytes)
        .collect()
}

/// Splits an IDX file into its dimensions and payload, checking the magic
/// and that the payload length matches exactly.
pub fn parse_idx(bytes: &[u8], magic: u32, context: &str) -> Result<(Vec<usize>, Vec<u8>)> {
    let word = |i: usize| -> Result<u32> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
            .ok_or_else(|| Error::parse(context, "truncated header"))
    };
    let found = word(0)?;
    if found != magic {
        return Err(Error::parse(
            context,
            format!("magic {found:#010x}, expected {magic:#010x}"),
        ));
    }
    let rank = (magic & 0xff) as usize;
    let dims = (1..=rank)
        .map(|i| word(i).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let payload = &bytes[4 * (rank + 1)..];
    let expected: usize = dims.iter().product();
    if payload.len() != expected {
        return Err(Error::parse(
            context,
            format!("payload has {} bytes, dimensions {dims:?} need {expected}", payload.len()),
        ));
    }
    Ok((dims, payload.to_vec()))
}
