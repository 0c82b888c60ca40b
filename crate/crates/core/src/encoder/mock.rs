//! Deterministic stand-in for a frozen image encoder.
//!
//! Images rendered by [`MockBackend::render`] carry a barcode in their top
//! rows holding an identity index and a per-image nonce. When the backend has
//! identity centers, a barcoded image of identity `k` embeds to center `k`
//! rotated by a random angle `phi = |z| * noise` (with `z` standard normal)
//! toward a uniformly random tangent direction; the randomness is seeded by
//! `(seed, k, nonce)`, so the output is still a pure function of the pixels.
//! Any other image embeds through a fixed random projection of its 8x8
//! block-averaged colors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::EncoderBackend;
use crate::error::{Error, Result};
use crate::preprocess::{FaceImage, ALIGNED_SIZE};
use crate::rng::mix64;
use crate::types::dot;

pub const BARCODE_MAGIC: u16 = 0xFACE;
const BARCODE_BITS: u32 = 64;
const BARCODE_BIT_WIDTH: u32 = 3;
const BARCODE_ROWS: u32 = 4;
const GRID: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockConfig {
    pub seed: u64,
    pub dim: usize,
    /// Number of equiangular identity centers; 0 disables barcode decoding.
    pub centers: usize,
    /// Angle between any two identity centers, in degrees (at most 90).
    pub separation_deg: f64,
    /// Scale of the per-image angular deviation from its center, in degrees.
    pub noise_deg: f64,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            dim: 64,
            centers: 12,
            separation_deg: 60.0,
            noise_deg: 5.0,
        }
    }
}

impl MockConfig {
    /// Projection-only backend without identity centers.
    pub fn projection(seed: u64, dim: usize) -> Self {
        Self {
            seed,
            dim,
            centers: 0,
            separation_deg: 0.0,
            noise_deg: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MockBackend {
    name: String,
    seed: u64,
    dim: usize,
    centers: Vec<Vec<f64>>,
    noise_rad: f64,
    /// Row-major `dim x (8*8*3)` Gaussian projection.
    projection: Vec<f64>,
}

impl MockBackend {
    pub fn new(config: MockConfig) -> Result<Self> {
        let centers = if config.centers > 0 {
            equiangular_centers(config.centers, config.dim, config.separation_deg, config.seed)?
        } else {
            Vec::new()
        };
        Self::with_centers(config.seed, config.dim, centers, config.noise_deg)
    }

    /// Backend with explicit identity centers (each normalized here).
    pub fn with_centers(
        seed: u64,
        dim: usize,
        centers: Vec<Vec<f64>>,
        noise_deg: f64,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid("mock backend", "dimension must be at least 2"));
        }
        if !(noise_deg >= 0.0 && noise_deg.is_finite()) {
            return Err(Error::invalid("mock backend", "noise must be non-negative"));
        }
        let centers = centers
            .into_iter()
            .map(|c| {
                if c.len() != dim {
                    return Err(Error::Dimension {
                        expected: dim,
                        actual: c.len(),
                    });
                }
                Ok(crate::types::l2_normalize(&c)?.into_values())
            })
            .collect::<Result<Vec<_>>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ 0x5052_4f4a));
        let features = GRID * GRID * 3;
        let projection = (0..dim * features)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Ok(Self {
            name: "mock".to_string(),
            seed,
            dim,
            centers,
            noise_rad: noise_deg.to_radians(),
            projection,
        })
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    /// A 224x224 synthetic face carrying `(identity, nonce)` in its barcode.
    pub fn render(identity: u16, nonce: u32) -> FaceImage {
        let size = ALIGNED_SIZE;
        let mut pixels = Vec::with_capacity((size * size * 3) as usize);
        let tint = [
            (identity as u32 * 53 % 200 + 30) as u8,
            (identity as u32 * 97 % 200 + 30) as u8,
            (nonce % 200 + 30) as u8,
        ];
        for y in 0..size {
            for x in 0..size {
                let shade = ((x + y) % 32) as u8;
                pixels.extend(tint.iter().map(|t| t.saturating_add(shade)));
            }
        }
        let code = ((BARCODE_MAGIC as u64) << 48) | ((identity as u64) << 32) | nonce as u64;
        for bit in 0..BARCODE_BITS {
            let on = (code >> (BARCODE_BITS - 1 - bit)) & 1 == 1;
            let value = if on { 255 } else { 0 };
            for y in 0..BARCODE_ROWS {
                for dx in 0..BARCODE_BIT_WIDTH {
                    let x = bit * BARCODE_BIT_WIDTH + dx;
                    let o = ((y * size + x) * 3) as usize;
                    pixels[o..o + 3].fill(value);
                }
            }
        }
        FaceImage::new(pixels, size, size, 3).expect("rendered buffer matches its shape")
    }

    /// Reads back `(identity, nonce)` from a rendered image.
    pub fn decode(image: &FaceImage) -> Option<(u16, u32)> {
        if !image.is_aligned_shape() {
            return None;
        }
        let mut code = 0u64;
        for bit in 0..BARCODE_BITS {
            let x = bit * BARCODE_BIT_WIDTH + BARCODE_BIT_WIDTH / 2;
            let o = ((image.width + x) * 3) as usize; // row 1
            let px = &image.pixels[o..o + 3];
            let on = px.iter().all(|&v| v >= 128);
            let off = px.iter().all(|&v| v < 128);
            if !on && !off {
                return None;
            }
            code = (code << 1) | on as u64;
        }
        ((code >> 48) as u16 == BARCODE_MAGIC).then_some(((code >> 32) as u16, code as u32))
    }

    fn embed_center(&self, center: &[f64], identity: u16, nonce: u32) -> Vec<f64> {
        let stream = mix64(self.seed ^ mix64(((identity as u64) << 32) | nonce as u64));
        let mut rng = ChaCha8Rng::seed_from_u64(stream);
        let z: f64 = StandardNormal.sample(&mut rng);
        let phi = z.abs() * self.noise_rad;
        let mut tangent: Vec<f64> = (0..self.dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let along = dot(&tangent, center);
        tangent.iter_mut().zip(center).for_each(|(t, c)| *t -= along * c);
        let norm = dot(&tangent, &tangent).sqrt();
        let (sin, cos) = phi.sin_cos();
        center
            .iter()
            .zip(&tangent)
            .map(|(c, t)| cos * c + sin * t / norm)
            .collect()
    }

    fn embed_projection(&self, image: &FaceImage) -> Vec<f64> {
        let size = ALIGNED_SIZE as usize;
        let block = size / GRID;
        let mut features = vec![0.0f64; GRID * GRID * 3];
        for y in 0..size {
            for x in 0..size {
                let cell = (y / block).min(GRID - 1) * GRID + (x / block).min(GRID - 1);
                let o = (y * size + x) * 3;
                for c in 0..3 {
                    features[cell * 3 + c] += image.pixels[o + c] as f64;
                }
            }
        }
        let per_cell = (block * block) as f64;
        features
            .iter_mut()
            .for_each(|f| *f = *f / (per_cell * 255.0) - 0.5);
        self.projection
            .chunks_exact(features.len())
            .map(|row| dot(row, &features))
            .collect()
    }
}

impl EncoderBackend for MockBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_raw(&self, image: &FaceImage) -> Result<Vec<f32>> {
        if !image.is_aligned_shape() {
            return Err(image.shape_error());
        }
        let values = match Self::decode(image) {
            Some((identity, nonce)) if (identity as usize) < self.centers.len() => {
                self.embed_center(&self.centers[identity as usize], identity, nonce)
            }
            _ => self.embed_projection(image),
        };
        // Scaled so raw outputs are not unit length; callers normalize.
        Ok(values.iter().map(|&v| (2.5 * v) as f32).collect())
    }
}

/// `count` unit vectors in `dim` dimensions whose pairwise angles all equal
/// `separation_deg`: `c_k = cos(a) b_0 + sin(a) b_(k+1)` over a seeded random
/// orthonormal basis `b`, with `cos^2(a) = cos(separation)`.
pub fn equiangular_centers(
    count: usize,
    dim: usize,
    separation_deg: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if dim < count + 1 {
        return Err(Error::invalid(
            "identity centers",
            format!("{count} centers need dimension >= {}", count + 1),
        ));
    }
    if !(0.0..=90.0).contains(&separation_deg) {
        return Err(Error::invalid(
            "identity centers",
            "separation must lie in [0, 90] degrees",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ 0x4345_4e54));
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count + 1);
    while basis.len() < count + 1 {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        // Two Gram-Schmidt passes keep the basis orthonormal to ~1e-16.
        for _ in 0..2 {
            for b in &basis {
                let p = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let cos_a = separation_deg.to_radians().cos().max(0.0).sqrt();
    let sin_a = (1.0 - cos_a * cos_a).max(0.0).sqrt();
    Ok((0..count)
        .map(|k| {
            basis[0]
                .iter()
                .zip(&basis[k + 1])
                .map(|(b0, bk)| cos_a * b0 + sin_a * bk)
                .collect()
        })
        .collect())
}
