//! Reader for the IDX files the MNIST digits ship in.

use std::path::Path;

use crate::error::{Error, Result};
use crate::learn::{Dataset, Targets};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Config("IDX file truncated in its header".into()))
}

/// Parses an image file and a label file; keeps the first `limit` samples.
/// Pixels are scaled to [0, 1] and a constant bias feature is appended.
pub fn parse_idx(images: &[u8], labels: &[u8], limit: usize) -> Result<Dataset> {
    if be_u32(images, 0)? != IMAGE_MAGIC {
        return Err(Error::Config("image file magic is not 0x00000803".into()));
    }
    if be_u32(labels, 0)? != LABEL_MAGIC {
        return Err(Error::Config("label file magic is not 0x00000801".into()));
    }
    let n_img = be_u32(images, 4)? as usize;
    let rows = be_u32(images, 8)? as usize;
    let cols = be_u32(images, 12)? as usize;
    let n_lab = be_u32(labels, 4)? as usize;
    if n_img != n_lab {
        return Err(Error::Config(format!("{n_img} images but {n_lab} labels")));
    }
    let pixels = rows * cols;
    let n = n_img.min(limit);
    let img = images
        .get(16..16 + n * pixels)
        .ok_or_else(|| Error::Config("image file shorter than its header says".into()))?;
    let lab = labels.get(8..8 + n).ok_or_else(|| Error::Config("label file shorter than its header says".into()))?;
    let p = pixels + 1;
    let mut features = Vec::with_capacity(n * p);
    for row in img.chunks(pixels) {
        features.extend(row.iter().map(|&v| f64::from(v) / 255.0));
        features.push(1.0);
    }
    let labels: Vec<usize> = lab.iter().map(|&l| usize::from(l)).collect();
    let classes = labels.iter().max().map_or(0, |m| m + 1).max(10);
    Ok(Dataset { n, p, features, targets: Targets::Labels { labels, classes } })
}

/// Reads both files; `Ok(None)` when either is missing.
pub fn load_idx(images: &Path, labels: &Path, limit: usize) -> Result<Option<Dataset>> {
    if !images.is_file() || !labels.is_file() {
        return Ok(None);
    }
    parse_idx(&std::fs::read(images)?, &std::fs::read(labels)?, limit).map(Some)
}
