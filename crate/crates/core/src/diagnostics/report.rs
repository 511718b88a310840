use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;

/// Buffered writer with the header line already written.
pub(crate) fn csv_file(path: impl AsRef<Path>, header: &str) -> Result<BufWriter<File>> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    Ok(w)
}

/// Gray level for a value: 255 for zero, otherwise 0 (largest) to 224
/// (smallest positive) on a log scale so that small nonzero entries stay
/// distinguishable from exact zeros.
fn shade(v: f64, lo: f64, hi: f64) -> u8 {
    if !(v > 0.0) {
        return 255;
    }
    if hi <= lo {
        return 0;
    }
    let frac = (hi.log10() - v.log10()) / (hi.log10() - lo.log10());
    (224.0 * frac.clamp(0.0, 1.0)).round() as u8
}

/// Binary PGM (P5, maxval 255) of a non-negative matrix, each entry drawn
/// as a `cell`×`cell` square.
pub fn heatmap_pgm(path: impl AsRef<Path>, rows: &[Vec<f64>], cell: usize) -> Result<()> {
    let positive = rows.iter().flatten().copied().filter(|&v| v > 0.0);
    let lo = positive.clone().fold(f64::INFINITY, f64::min);
    let hi = positive.fold(0.0, f64::max);
    let cols = rows.first().map_or(0, Vec::len);
    let (w, h) = (cols * cell, rows.len() * cell);
    let mut pixels = Vec::with_capacity(w * h);
    for row in rows {
        let line: Vec<u8> = row.iter().flat_map(|&v| std::iter::repeat_n(shade(v, lo, hi), cell)).collect();
        for _ in 0..cell {
            pixels.extend_from_slice(&line);
        }
    }
    let mut f = BufWriter::new(File::create(path)?);
    write!(f, "P5\n{w} {h}\n255\n")?;
    f.write_all(&pixels)?;
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_is_white_and_largest_is_black() {
        assert_eq!(shade(0.0, 1e-3, 1.0), 255);
        assert_eq!(shade(1.0, 1e-3, 1.0), 0);
        assert_eq!(shade(1e-3, 1e-3, 1.0), 224);
    }

    #[test]
    fn pgm_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        heatmap_pgm(&p, &[vec![0.0, 1.0], vec![0.5, 0.0]], 2).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let header = b"P5\n4 4\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        let px = &bytes[header.len()..];
        assert_eq!(px.len(), 16);
        assert_eq!(px[0], 255);
        assert_eq!(px[2], 0);
        assert_eq!(px[15], 255);
    }
}
