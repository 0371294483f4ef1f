//! Region covariance descriptors from 8-bit grayscale images.
//!
//! Each pixel contributes `φ = [I, |∂I/∂x|, |∂I/∂y|, |∂²I/∂x²|, |∂²I/∂y²|]`.
//! Derivatives are central differences over the whole image, with the image
//! mirrored at its borders (`I[-1] = I[1]`), so every patch sees the same
//! stencil regardless of where it sits.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;

use super::rng::stream_rng;
use crate::error::{Error, Result};
use crate::spd::{make_spd, SpdMatrix};

pub const FEATURE_DIM: usize = 5;

/// Row-major grayscale image, intensities kept as `f64` in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::SizeMismatch(format!(
                "{width}×{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let pixels = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self { width, height, pixels }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    fn reflected(&self, x: isize, y: isize) -> f64 {
        self.get(reflect(x, self.width), reflect(y, self.height))
    }
}

fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

fn pgm_token<R: BufRead>(input: &mut R) -> Result<String> {
    let mut token = String::new();
    let mut byte = [0u8; 1];
    loop {
        if input.read(&mut byte)? == 0 {
            if token.is_empty() {
                return Err(Error::Parse {
                    line: 0,
                    message: "unexpected end of PGM header".into(),
                });
            }
            return Ok(token);
        }
        let c = byte[0];
        if c == b'#' && token.is_empty() {
            let mut skip = Vec::new();
            input.read_until(b'\n', &mut skip)?;
        } else if c.is_ascii_whitespace() {
            if !token.is_empty() {
                return Ok(token);
            }
        } else {
            token.push(c as char);
        }
    }
}

/// Binary PGM (`P5`) with maxval at most 255.
pub fn read_pgm<R: Read>(input: R) -> Result<GrayImage> {
    let mut input = BufReader::new(input);
    let bad = |message: String| Error::Parse { line: 1, message };
    let magic = pgm_token(&mut input)?;
    if magic != "P5" {
        return Err(bad(format!("expected PGM magic 'P5', got '{magic}'")));
    }
    let mut num = || -> Result<usize> {
        let t = pgm_token(&mut input)?;
        t.parse().map_err(|_| bad(format!("bad PGM header field '{t}'")))
    };
    let (width, height, maxval) = (num()?, num()?, num()?);
    if maxval == 0 || maxval > 255 {
        return Err(bad(format!("only 8-bit PGM is supported, maxval {maxval}")));
    }
    // The single whitespace byte after maxval was consumed by pgm_token.
    let mut raw = vec![0u8; width * height];
    input.read_exact(&mut raw)?;
    GrayImage::new(width, height, raw.into_iter().map(f64::from).collect())
}

pub fn read_pgm_file(path: impl AsRef<Path>) -> Result<GrayImage> {
    read_pgm(std::fs::File::open(path)?)
}

/// Feature vectors of every pixel in the `w×h` window at `(x0, y0)`, row-major.
pub fn patch_features(image: &GrayImage, x0: usize, y0: usize, w: usize, h: usize) -> Result<Vec<[f64; FEATURE_DIM]>> {
    if x0 + w > image.width || y0 + h > image.height || w == 0 || h == 0 {
        return Err(Error::invalid(format!(
            "patch {w}×{h} at ({x0}, {y0}) does not fit a {}×{} image",
            image.width, image.height
        )));
    }
    let mut out = Vec::with_capacity(w * h);
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            let (xi, yi) = (x as isize, y as isize);
            let c = image.get(x, y);
            let (l, r) = (image.reflected(xi - 1, yi), image.reflected(xi + 1, yi));
            let (u, d) = (image.reflected(xi, yi - 1), image.reflected(xi, yi + 1));
            out.push([
                c,
                ((r - l) / 2.0).abs(),
                ((d - u) / 2.0).abs(),
                (r - 2.0 * c + l).abs(),
                (d - 2.0 * c + u).abs(),
            ]);
        }
    }
    Ok(out)
}

/// Whether a rank-deficient covariance is repaired by adding `ε·I`,
/// `ε = 1e-8·tr(C)/d`, or reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RidgeRepair {
    #[default]
    Off,
    On,
}

/// Unbiased sample covariance `1/(n−1) Σ (φ_i − μ)(φ_i − μ)ᵀ`.
pub fn covariance_of_features<V: AsRef<[f64]>>(features: &[V], ridge: RidgeRepair) -> Result<SpdMatrix> {
    let n = features.len();
    let d = features.first().map(|f| f.as_ref().len()).unwrap_or(0);
    if d == 0 || n < d + 1 {
        return Err(Error::invalid(format!(
            "covariance of {d}-dimensional features needs at least {} vectors, got {n}",
            d + 1
        )));
    }
    let mut mean = DVector::zeros(d);
    for f in features {
        let f = f.as_ref();
        if f.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: f.len(),
            });
        }
        mean += DVector::from_column_slice(f);
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for f in features {
        let c = DVector::from_column_slice(f.as_ref()) - &mean;
        cov.syger(1.0, &c, &c, 1.0);
    }
    cov.fill_upper_triangle_with_lower_triangle();
    cov /= (n - 1) as f64;

    match make_spd(cov.clone()) {
        Ok(s) => Ok(s),
        Err(Error::NotPositiveDefinite { min_eigenvalue }) => {
            let trace = cov.trace();
            if ridge == RidgeRepair::Off || trace <= 0.0 {
                return Err(Error::DegenerateCovariance { min_eigenvalue });
            }
            let eps = 1e-8 * trace / d as f64;
            make_spd(cov + DMatrix::identity(d, d) * eps)
                .map_err(|_| Error::DegenerateCovariance { min_eigenvalue })
        }
        Err(e) => Err(e),
    }
}

/// Patch geometry and covariance options for image descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePatchSpec {
    pub patch: usize,
    pub grid: usize,
    /// Fraction `ρ ∈ (0, 1]` of patch pixels used for the covariance.
    pub fraction: f64,
    pub ridge: RidgeRepair,
    /// Seed for pixel subsampling when `fraction < 1`.
    pub seed: u64,
}

impl Default for ImagePatchSpec {
    fn default() -> Self {
        Self {
            patch: 32,
            grid: 8,
            fraction: 1.0,
            ridge: RidgeRepair::Off,
            seed: 0,
        }
    }
}

impl ImagePatchSpec {
    fn validate(&self, image: &GrayImage) -> Result<()> {
        if self.patch > image.width || self.patch > image.height || self.grid == 0 {
            return Err(Error::invalid(format!(
                "{0}×{0} patches do not fit a {1}×{2} image",
                self.patch, image.width, image.height
            )));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::invalid(format!("pixel fraction must lie in (0, 1], got {}", self.fraction)));
        }
        let used = self.pixels_used();
        if used < FEATURE_DIM + 1 {
            return Err(Error::invalid(format!(
                "{used} pixels per patch is fewer than the {} required",
                FEATURE_DIM + 1
            )));
        }
        Ok(())
    }

    fn pixels_used(&self) -> usize {
        ((self.fraction * (self.patch * self.patch) as f64).round() as usize).max(1)
    }

    /// Top-left corners of the grid, evenly spread so the outer patches touch the borders.
    pub fn origins(&self, width: usize, height: usize) -> Vec<(usize, usize)> {
        let place = |extent: usize, k: usize| {
            if self.grid == 1 {
                (extent - self.patch) / 2
            } else {
                ((k * (extent - self.patch)) as f64 / (self.grid - 1) as f64).round() as usize
            }
        };
        let mut out = Vec::with_capacity(self.grid * self.grid);
        for gy in 0..self.grid {
            for gx in 0..self.grid {
                out.push((place(width, gx), place(height, gy)));
            }
        }
        out
    }
}

/// Covariance descriptor of one patch, subsampling `ρ` of its pixels when requested.
pub fn covariance_descriptor(image: &GrayImage, x0: usize, y0: usize, spec: &ImagePatchSpec) -> Result<SpdMatrix> {
    spec.validate(image)?;
    let features = patch_features(image, x0, y0, spec.patch, spec.patch)?;
    let used = spec.pixels_used();
    if used == features.len() {
        return covariance_of_features(&features, spec.ridge);
    }
    let stream = ((y0 as u64) << 32) | x0 as u64;
    let mut rng = stream_rng(spec.seed, stream);
    let picked: Vec<[f64; FEATURE_DIM]> = sample_indices(&mut rng, features.len(), used)
        .into_iter()
        .map(|i| features[i])
        .collect();
    covariance_of_features(&picked, spec.ridge)
}

/// One descriptor per grid cell, row-major over the grid.
pub fn extract_descriptors(image: &GrayImage, spec: &ImagePatchSpec) -> Result<Vec<SpdMatrix>> {
    spec.validate(image)?;
    spec.origins(image.width, image.height)
        .into_iter()
        .map(|(x, y)| covariance_descriptor(image, x, y, spec))
        .collect()
}
