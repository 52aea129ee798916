//! Synthetic phantoms and noisy measurements.

use alloc::vec::Vec;

use rand::Rng as _;
#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::{Grid, Image, Measurement};
use crate::operators::LinearOp;
use crate::rng::{stream_rng, Rng};

const PHANTOM_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

/// Which phantom family a dataset draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum PhantomKind {
    Balls,
    Vessels,
}

impl PhantomKind {
    pub fn name(self) -> &'static str {
        match self {
            PhantomKind::Balls => "balls",
            PhantomKind::Vessels => "vessels",
        }
    }

    pub fn generate(self, n: usize, seed: u64) -> Result<Image> {
        match self {
            PhantomKind::Balls => make_ball(n, seed),
            PhantomKind::Vessels => make_vessel_like(n, seed),
        }
    }
}

/// Radius of every ball phantom on an `n × n` grid.
pub fn ball_radius(n: usize) -> f64 {
    n as f64 / 8.0
}

/// One disk of radius `n/8` and intensity in `[0.75, 1]`, fully inside the domain.
pub fn make_ball(n: usize, seed: u64) -> Result<Image> {
    if n < 16 {
        return Err(Error::Config(alloc::format!("ball phantoms need n >= 16, got {n}")));
    }
    let mut rng = stream_rng(seed, PHANTOM_STREAM);
    let r = ball_radius(n);
    let hi = n as f64 - 1.0 - r;
    let cy = rng.gen_range(r..=hi);
    let cx = rng.gen_range(r..=hi);
    let intensity = rng.gen_range(0.75..=1.0);
    Ok(Grid::from_fn(n, n, |i, j| {
        let (dy, dx) = (i as f64 - cy, j as f64 - cx);
        if dy * dy + dx * dx <= r * r {
            intensity
        } else {
            0.0
        }
    }))
}

#[derive(Debug, Clone, Copy)]
struct Point {
    y: f64,
    x: f64,
}

struct Stroke {
    start: Point,
    control: Point,
    end: Point,
}

impl Stroke {
    fn at(&self, t: f64) -> Point {
        let u = 1.0 - t;
        Point {
            y: u * u * self.start.y + 2.0 * u * t * self.control.y + t * t * self.end.y,
            x: u * u * self.start.x + 2.0 * u * t * self.control.x + t * t * self.end.x,
        }
    }

    fn length_estimate(&self) -> f64 {
        let mut len = 0.0;
        let mut prev = self.start;
        for k in 1..=16 {
            let p = self.at(k as f64 / 16.0);
            len += ((p.y - prev.y).powi(2) + (p.x - prev.x).powi(2)).sqrt();
            prev = p;
        }
        len
    }
}

fn random_stroke(rng: &mut Rng, start: Point, n: f64, length: f64) -> Stroke {
    let heading = rng.gen_range(0.0..core::f64::consts::TAU);
    let end = Point {
        y: (start.y + length * heading.sin()).clamp(0.0, n - 1.0),
        x: (start.x + length * heading.cos()).clamp(0.0, n - 1.0),
    };
    let bend = rng.gen_range(-0.35..0.35) * length;
    let mid = Point {
        y: 0.5 * (start.y + end.y),
        x: 0.5 * (start.x + end.x),
    };
    let control = Point {
        y: mid.y + bend * heading.cos(),
        x: mid.x - bend * heading.sin(),
    };
    Stroke { start, control, end }
}

/// A branching tree of 2–6 smooth strokes of width 1–3 pixels, scaled so the
/// brightest pixel is 1.
pub fn make_vessel_like(n: usize, seed: u64) -> Result<Image> {
    if n < 32 {
        return Err(Error::Config(alloc::format!("vessel phantoms need n >= 32, got {n}")));
    }
    let mut rng = stream_rng(seed, PHANTOM_STREAM);
    let nf = n as f64;
    let count = rng.gen_range(2..=6usize);
    let mut strokes: Vec<Stroke> = Vec::with_capacity(count);
    let root = Point {
        y: rng.gen_range(0.15 * nf..0.85 * nf),
        x: rng.gen_range(0.15 * nf..0.85 * nf),
    };
    let trunk_len = rng.gen_range(0.5 * nf..0.9 * nf);
    strokes.push(random_stroke(&mut rng, root, nf, trunk_len));
    while strokes.len() < count {
        let parent = &strokes[rng.gen_range(0..strokes.len())];
        let origin = parent.at(rng.gen_range(0.2..0.9));
        let len = rng.gen_range(0.2 * nf..0.5 * nf);
        strokes.push(random_stroke(&mut rng, origin, nf, len));
    }
    let mut img = Grid::zeros(n, n);
    for stroke in &strokes {
        let width = rng.gen_range(1.0..=3.0);
        let intensity = rng.gen_range(0.5..=1.0);
        let radius: f64 = width / 2.0;
        let steps = (stroke.length_estimate() * 4.0).ceil().max(2.0) as usize;
        for k in 0..=steps {
            let p = stroke.at(k as f64 / steps as f64);
            let reach = radius.ceil() as i64 + 1;
            let (py, px) = (p.y.round() as i64, p.x.round() as i64);
            for i in (py - reach)..=(py + reach) {
                for j in (px - reach)..=(px + reach) {
                    if i < 0 || j < 0 || i >= n as i64 || j >= n as i64 {
                        continue;
                    }
                    let d2 = (i as f64 - p.y).powi(2) + (j as f64 - p.x).powi(2);
                    // a 1-pixel-wide stroke still covers its nearest pixel
                    if d2 <= radius * radius || (i == py && j == px) {
                        let (iu, ju) = (i as usize, j as usize);
                        if img.get(iu, ju) < intensity {
                            img.set(iu, ju, intensity);
                        }
                    }
                }
            }
        }
    }
    let peak = img.max();
    if peak > 0.0 {
        img.scale(1.0 / peak);
    }
    Ok(img)
}

/// `A·x + e` with i.i.d. Gaussian `e` of standard deviation
/// `noise_level · max|A·x|`.
pub fn simulate_measurement(
    x: &Image,
    op: &dyn LinearOp,
    noise_level: f64,
    seed: u64,
) -> Result<Measurement> {
    if !(noise_level >= 0.0) {
        return Err(Error::Config(alloc::format!(
            "noise level must be non-negative, got {noise_level}"
        )));
    }
    let mut y = op.apply(x)?;
    let sigma = noise_level * y.max_abs();
    if sigma > 0.0 {
        let mut rng = stream_rng(seed, NOISE_STREAM);
        for v in y.as_mut_slice() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v += sigma * e;
        }
    }
    Ok(y)
}

/// Which half of a dataset a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// What to generate: phantom family, sample counts, grid size and noise.
///
/// For vessels `n_train` counts unique phantoms; each is also stored rotated by
/// 90°, so twice as many training samples end up on disk.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct DatasetSpec {
    pub kind: PhantomKind,
    pub n_train: usize,
    pub n_test: usize,
    pub n: usize,
    pub noise_level: f64,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn balls() -> Self {
        Self {
            kind: PhantomKind::Balls,
            n_train: 4096,
            n_test: 64,
            n: 64,
            noise_level: 0.01,
            seed: 0,
        }
    }

    pub fn vessels() -> Self {
        Self {
            kind: PhantomKind::Vessels,
            n_train: 2760,
            n_test: 64,
            n: 64,
            noise_level: 0.01,
            seed: 0,
        }
    }

    pub fn for_kind(kind: PhantomKind) -> Self {
        match kind {
            PhantomKind::Balls => Self::balls(),
            PhantomKind::Vessels => Self::vessels(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::Config("dataset counts must be at least 1".into()));
        }
        if !(self.noise_level >= 0.0) || !self.noise_level.is_finite() {
            return Err(Error::Config(alloc::format!(
                "noise level must be a finite non-negative number, got {}",
                self.noise_level
            )));
        }
        Ok(())
    }

    fn augmented(&self) -> bool {
        self.kind == PhantomKind::Vessels
    }

    /// Number of samples stored for `split`, rotations included.
    pub fn stored_count(&self, split: Split) -> usize {
        match split {
            Split::Train if self.augmented() => 2 * self.n_train,
            Split::Train => self.n_train,
            Split::Test => self.n_test,
        }
    }

    /// Seeds of stored sample `index`: (phantom seed, noise seed, rotated).
    ///
    /// Seeds come from a bijective mix of (global seed, split, index, role), so
    /// train and test seeds never collide and every sample can be generated
    /// independently of the others.
    pub fn sample_seeds(&self, split: Split, index: usize) -> (u64, u64, bool) {
        let (unique, rotated) = if split == Split::Train && self.augmented() {
            (index / 2, index % 2 == 1)
        } else {
            (index, false)
        };
        let base = ((split as u64) << 40 | unique as u64) << 2;
        let phantom = derive_seed(self.seed, base);
        let noise = derive_seed(self.seed, base | if rotated { 2 } else { 1 });
        (phantom, noise, rotated)
    }
}

/// Splitmix64 of `seed + counter·φ`; injective in `counter` for a fixed seed.
pub fn derive_seed(seed: u64, counter: u64) -> u64 {
    let mut z = seed.wrapping_add(counter.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One ground-truth image with its simulated measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Image,
    pub y: Measurement,
    pub phantom_seed: u64,
    pub noise_seed: u64,
    pub rotated: bool,
}

/// Generates stored sample `index` of `split`, measuring with `op`.
pub fn make_sample(spec: &DatasetSpec, split: Split, index: usize, op: &dyn LinearOp) -> Result<Sample> {
    let (phantom_seed, noise_seed, rotated) = spec.sample_seeds(split, index);
    let mut x = spec.kind.generate(spec.n, phantom_seed)?;
    if rotated {
        x = x.rot90();
    }
    let y = simulate_measurement(&x, op, spec.noise_level, noise_seed)?;
    Ok(Sample {
        x,
        y,
        phantom_seed,
        noise_seed,
        rotated,
    })
}
