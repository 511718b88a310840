//! IDX files: a big-endian u32 magic `0x0000 TT NN` (TT = element type,
//! NN = rank), NN big-endian u32 extents, then the raw elements. Only
//! unsigned bytes (TT = 0x08) are read. Gzip input is detected by its
//! header and decompressed transparently.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use super::dataset::{Dataset, Targets};
use crate::error::{format_err, Result};
use crate::numkit::{Scalar, Tensor};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| format_err!("{}: corrupt gzip stream ({e})", path.display()))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Parses an in-memory IDX byte array with the expected magic and returns
/// its extents and payload.
pub fn parse_idx(bytes: &[u8], magic: u32) -> Result<(Vec<usize>, &[u8])> {
    let word = |i: usize| -> Result<u32> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
            .ok_or_else(|| format_err!("IDX header truncated"))
    };
    let found = word(0)?;
    if found != magic {
        return Err(format_err!("IDX magic 0x{found:08x}, expected 0x{magic:08x}"));
    }
    let rank = (magic & 0xff) as usize;
    let dims = (1..=rank).map(|i| word(i).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let body = &bytes[4 * (rank + 1)..];
    let n: usize = dims.iter().product();
    if n == 0 {
        return Err(format_err!("IDX file declares no elements"));
    }
    if body.len() < n {
        return Err(format_err!("IDX body truncated: {} of {n} bytes", body.len()));
    }
    Ok((dims, &body[..n]))
}

/// Images scaled to [0, 1] with shape `[N, rows, cols]`, labels as class ids.
pub fn load_idx<T: Scalar>(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset<T>> {
    let img_bytes = read_maybe_gz(images_path.as_ref())?;
    let lab_bytes = read_maybe_gz(labels_path.as_ref())?;
    idx_dataset(&img_bytes, &lab_bytes)
}

pub fn idx_dataset<T: Scalar>(img_bytes: &[u8], lab_bytes: &[u8]) -> Result<Dataset<T>> {
    let (dims, pixels) = parse_idx(img_bytes, IMAGES_MAGIC)?;
    let (ldims, labels) = parse_idx(lab_bytes, LABELS_MAGIC)?;
    if ldims[0] != dims[0] {
        return Err(format_err!("{} images but {} labels", dims[0], ldims[0]));
    }
    let scale = 1.0 / 255.0;
    let data = pixels.iter().map(|&p| T::of(p as f64 * scale)).collect();
    let inputs = Tensor::from_vec(&dims, data)?;
    let labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let n_classes = labels.iter().max().map_or(0, |&m| m + 1).max(2);
    Dataset::new(inputs, Targets::Classes { labels, n_classes })
}
