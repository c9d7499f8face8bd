use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;

/// Pixel grid of an image; atoms sit at integer coordinates
/// `(col, height - 1 - row)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
}

/// Reads a plain (`P2`) or raw (`P5`) 8-bit PGM into its grid and
/// row-major intensities.
pub fn parse_pgm(bytes: &[u8]) -> Result<(Grid, Vec<u8>)> {
    let unsupported = |msg: &str| Error::UnsupportedFormat(msg.to_string());
    let mut pos = 0;
    let mut header = Vec::with_capacity(4);
    while header.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(unsupported("truncated PGM header"));
        }
        header.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| unsupported("non-ASCII header"))?);
    }
    let raw = match header[0] {
        "P2" => false,
        "P5" => true,
        other => return Err(Error::UnsupportedFormat(format!("magic number {other:?}; expected P2 or P5"))),
    };
    let num = |s: &str| s.parse::<usize>().map_err(|_| unsupported("malformed header field"));
    let (width, height, maxval) = (num(header[1])?, num(header[2])?, num(header[3])?);
    if width == 0 || height == 0 {
        return Err(unsupported("empty image"));
    }
    if !(1..=255).contains(&maxval) {
        return Err(Error::UnsupportedFormat(format!("maxval {maxval}; only 8-bit images are supported")));
    }
    let count = width * height;
    let pixels: Vec<u8> = if raw {
        // exactly one whitespace byte separates the header from the data
        let data = bytes.get(pos + 1..).unwrap_or(&[]);
        if data.len() < count {
            return Err(unsupported("truncated raster"));
        }
        data[..count].to_vec()
    } else {
        let text = std::str::from_utf8(&bytes[pos..]).map_err(|_| unsupported("non-ASCII raster"))?;
        let values = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_ascii_whitespace)
            .map(|t| t.parse::<u8>().map_err(|_| Error::UnsupportedFormat(format!("bad sample {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if values.len() < count {
            return Err(unsupported("truncated raster"));
        }
        values[..count].to_vec()
    };
    if pixels.iter().any(|&v| v as usize > maxval) {
        return Err(unsupported("sample above maxval"));
    }
    Ok((Grid { width, height }, pixels))
}

/// Measure with one atom per nonzero pixel, weighted by intensity.
pub fn image_to_measure(bytes: &[u8]) -> Result<DiscreteMeasure> {
    let (grid, pixels) = parse_pgm(bytes)?;
    let mut rows = Vec::new();
    let mut weights = Vec::new();
    for (idx, &v) in pixels.iter().enumerate() {
        if v == 0 {
            continue;
        }
        let (row, col) = (idx / grid.width, idx % grid.width);
        rows.push(vec![col as f64, (grid.height - 1 - row) as f64]);
        weights.push(v as f64);
    }
    if rows.is_empty() {
        return Err(Error::AllZeroImage);
    }
    DiscreteMeasure::from_rows(&rows, Some(weights))
}

/// Moves each atom with probability `p` to one of its eight neighbouring
/// cells, chosen uniformly and clipped to `grid`. Atoms that land on the
/// same cell stay separate.
pub fn noisy_digit(prototype: &DiscreteMeasure, grid: Grid, p: f64, seed: u64) -> Result<DiscreteMeasure> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidSpec(format!("move probability {p} outside [0, 1]")));
    }
    if prototype.dim() != 2 {
        return Err(Error::DimensionError {
            required: 2,
            found: prototype.dim(),
        });
    }
    const NEIGHBOURS: [(f64, f64); 8] = [
        (-1.0, -1.0),
        (-1.0, 0.0),
        (-1.0, 1.0),
        (0.0, -1.0),
        (0.0, 1.0),
        (1.0, -1.0),
        (1.0, 0.0),
        (1.0, 1.0),
    ];
    let (xmax, ymax) = ((grid.width - 1) as f64, (grid.height - 1) as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Array2<f64> = prototype.points().to_owned();
    for mut row in pts.outer_iter_mut() {
        if rng.random_bool(p) {
            let (dx, dy) = NEIGHBOURS[rng.random_range(0..8)];
            row[0] = (row[0] + dx).clamp(0.0, xmax);
            row[1] = (row[1] + dy).clamp(0.0, ymax);
        }
    }
    prototype.push_forward(pts)
}
