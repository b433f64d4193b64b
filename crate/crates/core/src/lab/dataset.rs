//! Synthetic factor-labeled images.
//!
//! Each 3x8x8 image shows one object on a dark background. The object is
//! described by four factors: shape, hue, quadrant and size. Every
//! combination appears equally often.
//!
//! Per-pixel brightness noise multiplies the hue's RGB vector, so the
//! per-pixel maximum over channels does not depend on the hue at all.

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabError;

pub const CHANNELS: usize = 3;
pub const SIDE: usize = 8;
pub const PIXELS: usize = SIDE * SIDE;
pub const IMAGE_LEN: usize = CHANNELS * PIXELS;

pub const SHAPES: usize = 3;
pub const HUES: usize = 6;
pub const POSITIONS: usize = 4;
pub const SCALES: usize = 2;
/// Number of distinct factor combinations.
pub const COMBINATIONS: usize = SHAPES * HUES * POSITIONS * SCALES;

/// RGB corners of the hue circle, 60 degrees apart.
pub const HUE_RGB: [[f64; 3]; HUES] = [
    [1.0, 0.0, 0.0],
    [1.0, 1.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 1.0, 1.0],
    [0.0, 0.0, 1.0],
    [1.0, 0.0, 1.0],
];

const SIZES: [usize; SCALES] = [3, 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Shape,
    Hue,
    Position,
    Scale,
}

impl Factor {
    pub fn classes(self) -> usize {
        match self {
            Factor::Shape => SHAPES,
            Factor::Hue => HUES,
            Factor::Position => POSITIONS,
            Factor::Scale => SCALES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Factors {
    /// 0 square, 1 circle, 2 bar.
    pub shape: usize,
    pub hue: usize,
    /// Quadrant, row-major: 0 top-left .. 3 bottom-right.
    pub position: usize,
    pub scale: usize,
}

impl Factors {
    pub fn get(&self, factor: Factor) -> usize {
        match factor {
            Factor::Shape => self.shape,
            Factor::Hue => self.hue,
            Factor::Position => self.position,
            Factor::Scale => self.scale,
        }
    }

    fn from_index(i: usize) -> Self {
        let scale = i % SCALES;
        let position = (i / SCALES) % POSITIONS;
        let hue = (i / (SCALES * POSITIONS)) % HUES;
        let shape = i / (SCALES * POSITIONS * HUES);
        Self {
            shape,
            hue,
            position,
            scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    /// One row per sample, channel-major `C x H x W`, values in `[0, 1]`.
    pub images: Array2<f64>,
    pub factors: Vec<Factors>,
    pub seed: u64,
}

/// Train/eval index partition for one cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub eval: Vec<usize>,
}

fn shape_mask(shape: usize, size: usize) -> Vec<(usize, usize)> {
    let mut px = Vec::new();
    match shape {
        0 => {
            for y in 0..size {
                for x in 0..size {
                    px.push((y, x));
                }
            }
        }
        1 => {
            // disk approximation: square without its corners, a plus for size 3
            for y in 0..size {
                for x in 0..size {
                    let edge_y = y == 0 || y == size - 1;
                    let edge_x = x == 0 || x == size - 1;
                    if !(edge_y && edge_x) {
                        px.push((y, x));
                    }
                }
            }
        }
        _ => {
            for x in 0..size {
                px.push((0, x));
            }
        }
    }
    px
}

fn shape_height(shape: usize, size: usize) -> usize {
    if shape == 2 {
        1
    } else {
        size
    }
}

pub fn pixel(c: usize, y: usize, x: usize) -> usize {
    c * PIXELS + y * SIDE + x
}

fn render(f: &Factors, noise: f64, rng: &mut impl Rng, out: &mut [f64]) {
    const HALF: usize = SIDE / 2;
    let size = SIZES[f.scale];
    let height = shape_height(f.shape, size);
    let oy = rng.random_range(0..=HALF - height);
    let ox = rng.random_range(0..=HALF - size);
    let qy = (f.position / 2) * HALF;
    let qx = (f.position % 2) * HALF;
    let brightness = rng.random_range(0.6..=1.0);

    for p in 0..PIXELS {
        let g = rng.random_range(0.0..=noise);
        for c in 0..CHANNELS {
            out[c * PIXELS + p] = g;
        }
    }
    let rgb = HUE_RGB[f.hue];
    for (y, x) in shape_mask(f.shape, size) {
        let (py, px) = (qy + oy + y, qx + ox + x);
        let level = (brightness + rng.random_range(-noise..=noise)).clamp(0.0, 1.0);
        for c in 0..CHANNELS {
            out[pixel(c, py, px)] = level * rgb[c];
        }
    }
}

/// Generates `n` samples, `n / COMBINATIONS` of every factor combination.
pub fn generate_dataset(seed: u64, n: usize, noise: f64) -> Result<SyntheticDataset, LabError> {
    if n == 0 || !n.is_multiple_of(COMBINATIONS) {
        return Err(LabError::Config(format!(
            "dataset size {n} must be a positive multiple of {COMBINATIONS}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Array2::zeros((n, IMAGE_LEN));
    let mut factors = Vec::with_capacity(n);
    for (i, mut row) in images.rows_mut().into_iter().enumerate() {
        let f = Factors::from_index(i % COMBINATIONS);
        render(&f, noise, &mut rng, row.as_slice_mut().expect("rows are contiguous"));
        factors.push(f);
    }
    Ok(SyntheticDataset { images, factors, seed })
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Shuffles indices with `seed` and holds out the `fold`-th of `k` chunks.
    pub fn fold_split(&self, k: usize, fold: usize, seed: u64) -> Split {
        use rand::seq::SliceRandom;
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let lo = fold * self.len() / k;
        let hi = (fold + 1) * self.len() / k;
        let eval = idx[lo..hi].to_vec();
        let train = idx[..lo].iter().chain(&idx[hi..]).copied().collect();
        Split { train, eval }
    }

    pub fn rows(&self, indices: &[usize]) -> Array2<f64> {
        self.images.select(ndarray::Axis(0), indices)
    }

    pub fn labels(&self, indices: &[usize], factor: Factor) -> Vec<usize> {
        indices.iter().map(|&i| self.factors[i].get(factor)).collect()
    }
}

/// Per-pixel maximum over channels (the HSV value plane).
pub fn value_plane(image: ArrayView1<f64>) -> Array1<f64> {
    Array1::from_iter((0..PIXELS).map(|p| (0..CHANNELS).map(|c| image[c * PIXELS + p]).fold(0.0, f64::max)))
}

/// Rotates every channel by 90 degrees counter-clockwise.
pub fn rotate90(image: ArrayView1<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(IMAGE_LEN);
    for c in 0..CHANNELS {
        for y in 0..SIDE {
            for x in 0..SIDE {
                out[pixel(c, SIDE - 1 - x, y)] = image[pixel(c, y, x)];
            }
        }
    }
    out
}

pub fn rotate(image: ArrayView1<f64>, quarter_turns: usize) -> Array1<f64> {
    let mut out = image.to_owned();
    for _ in 0..quarter_turns % 4 {
        out = rotate90(out.view());
    }
    out
}

pub fn flip_horizontal(image: ArrayView1<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(IMAGE_LEN);
    for c in 0..CHANNELS {
        for y in 0..SIDE {
            for x in 0..SIDE {
                out[pixel(c, y, SIDE - 1 - x)] = image[pixel(c, y, x)];
            }
        }
    }
    out
}

/// Cyclic channel shift: a hue rotation by `shift * 120` degrees.
pub fn shift_channels(image: ArrayView1<f64>, shift: usize) -> Array1<f64> {
    let mut out = Array1::zeros(IMAGE_LEN);
    for c in 0..CHANNELS {
        let to = (c + shift) % CHANNELS;
        for p in 0..PIXELS {
            out[to * PIXELS + p] = image[c * PIXELS + p];
        }
    }
    out
}
