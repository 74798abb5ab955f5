//! Planar geometry, simulation windows and point-process sampling.
//!
//! All randomness flows through [`rng_from_seed`], a ChaCha8 stream seeded
//! from a single `u64`. ChaCha output is specified bit-for-bit, so a
//! realization is reproducible on every platform from `(seed, process,
//! window)` alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The generator used for every sampled quantity in the crate.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Plain,
    Torus,
}

/// Distance function used by every pairwise computation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Metric {
    #[default]
    Euclidean,
    /// Minimum-image distance on a `width x height` periodic domain.
    Torus { width: f64, height: f64 },
}

impl Metric {
    /// Componentwise displacement from `a` to `b` (minimum image on a torus).
    #[inline]
    pub fn delta(&self, a: Point2, b: Point2) -> (f64, f64) {
        let mut dx = b.x - a.x;
        let mut dy = b.y - a.y;
        if let Metric::Torus { width, height } = *self {
            dx -= width * (dx / width).round();
            dy -= height * (dy / height).round();
        }
        (dx, dy)
    }

    #[inline]
    pub fn distance(&self, a: Point2, b: Point2) -> f64 {
        let (dx, dy) = self.delta(a, b);
        (dx * dx + dy * dy).sqrt()
    }
}

/// Rectangular simulation region `[0, width) x [0, height)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub width: f64,
    pub height: f64,
    #[serde(default)]
    pub boundary: Boundary,
}

impl Window {
    pub fn new(width: f64, height: f64, boundary: Boundary) -> Result<Self> {
        if !(width.is_finite() && height.is_finite() && width > 0.0 && height > 0.0) {
            return Err(Error::config(format!(
                "window dimensions must be finite and positive, got {width} x {height}"
            )));
        }
        Ok(Self {
            width,
            height,
            boundary,
        })
    }

    pub fn unit_square() -> Self {
        Self {
            width: 1.0,
            height: 1.0,
            boundary: Boundary::Plain,
        }
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn center(&self) -> Point2 {
        Point2::new(0.5 * self.width, 0.5 * self.height)
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= 0.0 && p.x < self.width && p.y >= 0.0 && p.y < self.height
    }

    pub fn metric(&self) -> Metric {
        match self.boundary {
            Boundary::Plain => Metric::Euclidean,
            Boundary::Torus => Metric::Torus {
                width: self.width,
                height: self.height,
            },
        }
    }

    pub fn distance(&self, a: Point2, b: Point2) -> f64 {
        self.metric().distance(a, b)
    }
}

/// Convenience wrapper matching the free-function form used in tests and the CLI.
pub fn distance(a: Point2, b: Point2, window: &Window) -> f64 {
    window.distance(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PointProcess {
    /// Homogeneous Poisson process with the given intensity per unit area.
    Poisson { intensity: f64 },
    /// Exactly `n` i.i.d. uniform points.
    UniformN { n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointProcessConfig {
    pub process: PointProcess,
    pub seed: u64,
}

impl PointProcessConfig {
    pub fn poisson(intensity: f64, seed: u64) -> Self {
        Self {
            process: PointProcess::Poisson { intensity },
            seed,
        }
    }

    pub fn uniform(n: usize, seed: u64) -> Self {
        Self {
            process: PointProcess::UniformN { n },
            seed,
        }
    }
}

/// Draws one realization of the configured process inside `window`.
///
/// The boundary mode of the window plays no role here.
pub fn sample(config: &PointProcessConfig, window: &Window) -> Result<Vec<Point2>> {
    let mut rng = rng_from_seed(config.seed);
    sample_with(&config.process, window, &mut rng)
}

pub fn sample_with<R: Rng + ?Sized>(
    process: &PointProcess,
    window: &Window,
    rng: &mut R,
) -> Result<Vec<Point2>> {
    let count = match *process {
        PointProcess::Poisson { intensity } => {
            if !intensity.is_finite() || intensity < 0.0 {
                return Err(Error::config(format!(
                    "poisson intensity must be finite and non-negative, got {intensity}"
                )));
            }
            poisson_count(intensity * window.area(), rng)
        }
        PointProcess::UniformN { n } => n as u64,
    };
    let mut points = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let x = rng.gen::<f64>() * window.width;
        let y = rng.gen::<f64>() * window.height;
        points.push(Point2::new(x, y));
    }
    Ok(points)
}

/// Poisson variate by sequential inversion for small means and Hoermann's
/// transformed rejection with squeeze (PTRS) above [`INVERSION_LIMIT`].
pub fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean <= INVERSION_LIMIT {
        poisson_inversion(mean, rng)
    } else {
        poisson_ptrs(mean, rng)
    }
}

pub const INVERSION_LIMIT: f64 = 10.0;

fn poisson_inversion<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let u: f64 = rng.gen();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= mean / k as f64;
        let next = cdf + p;
        if next == cdf {
            // The tail underflowed; u sits in the last representable sliver.
            break;
        }
        cdf = next;
    }
    k
}

fn poisson_ptrs<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let smu = mean.sqrt();
    let b = 0.931 + 2.53 * smu;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    let log_mean = mean.ln();
    loop {
        let u = rng.gen::<f64>() - 0.5;
        let v: f64 = rng.gen();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -mean + k * log_mean - ln_factorial(k as u64);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// `ln(k!)`: exact table below 16, Stirling series above (error < 1e-14).
pub fn ln_factorial(k: u64) -> f64 {
    const TABLE: [f64; 16] = [
        0.0,
        0.0,
        std::f64::consts::LN_2,
        1.791_759_469_228_055,
        3.178_053_830_347_945_6,
        4.787_491_742_782_046,
        6.579_251_212_010_101,
        8.525_161_361_065_415,
        10.604_602_902_745_25,
        12.801_827_480_081_469,
        15.104_412_573_075_516,
        17.502_307_845_873_887,
        19.987_214_495_661_885,
        22.552_163_853_123_42,
        25.191_221_182_738_683,
        27.899_271_383_840_894,
    ];
    if (k as usize) < TABLE.len() {
        return TABLE[k as usize];
    }
    let n = k as f64;
    let inv = 1.0 / n;
    let inv2 = inv * inv;
    n * n.ln() - n + 0.5 * (std::f64::consts::TAU * n).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}

/// SplitMix64 finalizer. A bijection on `u64`.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for trial `trial_index` of a run started from `base_seed`.
///
/// `splitmix64(base + (k + 1) * 0x9e3779b97f4a7c15)`: the golden-ratio
/// increment is odd, so the inner map is injective in `k` modulo 2^64 and
/// the finalizer is a bijection; distinct trial indices therefore never
/// share a seed.
pub fn derive_trial_seed(base_seed: u64, trial_index: u64) -> u64 {
    const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
    splitmix64(base_seed.wrapping_add(trial_index.wrapping_add(1).wrapping_mul(GOLDEN)))
}
